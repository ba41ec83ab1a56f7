from setuptools import setup, find_packages

setup(
    name = 'ufp-guard',
    version = '1.0.0',
    packages = find_packages(),
    install_requires = [
        "Flask>=2.0",
        "click>=8.0",
        "numpy>=1.17",
        "scipy>=1.4"
    ],
    extras_require = {
        "test": ["pytest"]
    },
    entry_points = {
        "console_scripts": [
            "ufp-guard = service.cli:main"
        ]
    },
    description = 'Universal frequential perturbations: protect recordings of a voice against cloning',
    classifiers = [
        'Intended Audience :: Science/Research',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Topic :: Multimedia :: Sound/Audio :: Analysis'
    ],
)
