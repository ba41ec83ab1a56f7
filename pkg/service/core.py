"""
Application object and configuration loading.

Every other module gets its configuration and its logger from here:

::

    from service.core import app
    app.logger.info(u"...")
    app.config.get("STFT_HOP")

Configuration is layered.  The defaults in config/service.py are loaded first, then an optional
local.cfg in the project root, then whatever the command line asks for through add_configuration()
and set_option().
"""
import ast, logging, os
from configparser import ConfigParser, Error as ConfigParserError

from flask import Flask

from service.ufptools import ConfigurationException

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

app = Flask("service")
app.config.from_object("config.service")
app.config.from_pyfile(os.path.join(ROOT_DIR, "local.cfg"), silent=True)


def initialise(level=None):
    """
    Prepare the application for use: set the logger level from configuration (or the supplied override)

    :param level: optional logging level name which overrides LOG_LEVEL
    :return:
    """
    level = level or app.config.get("LOG_LEVEL", "INFO")
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigurationException(u"LOG_LEVEL: unknown logging level {x}".format(x=level))
    app.logger.setLevel(numeric)


def setting_name(section, key):
    """
    Map a sectioned configuration key onto the flat setting name

    ::

        [train] iterations  ->  TRAIN_ITERATIONS

    :param section: section name from the file (or the part before the dot of a --set option)
    :param key: key within the section
    :return: the upper-case setting name
    """
    return (section.strip() + "_" + key.strip()).upper().replace("-", "_").replace(".", "_")


def coerce(name, value):
    """
    Convert a string value from a configuration file or flag into the type of the existing default

    :param name: the setting name - it must already exist in the configuration
    :param value: the raw string
    :return: the typed value
    """
    if name not in app.config:
        raise ConfigurationException(u"{x}: unknown configuration key".format(x=name))
    default = app.config[name]
    value = value.strip()

    if isinstance(default, str):
        return value
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationException(u"{x}: expected a boolean, got {y}".format(x=name, y=value))

    try:
        parsed = ast.literal_eval(value)
    except (ValueError, SyntaxError):
        raise ConfigurationException(u"{x}: cannot parse value {y}".format(x=name, y=value))

    if isinstance(default, float) and isinstance(parsed, int):
        parsed = float(parsed)
    if default is not None and parsed is not None and not isinstance(parsed, type(default)):
        raise ConfigurationException(u"{x}: expected {t}, got {y}".format(x=name, t=type(default).__name__, y=value))
    return parsed


def add_configuration(path):
    """
    Load a sectioned key = value configuration file over the current configuration

    :param path: path to the file
    :return: the list of setting names which were changed
    """
    parser = ConfigParser()
    parser.optionxform = str
    try:
        with open(path) as f:
            parser.read_file(f)
    except (IOError, OSError) as e:
        raise ConfigurationException(u"unable to read configuration file {x}: {y}".format(x=path, y=e))
    except ConfigParserError as e:
        raise ConfigurationException(u"malformed configuration file {x}: {y}".format(x=path, y=e))

    changed = []
    for section in parser.sections():
        for key, value in parser.items(section):
            name = setting_name(section, key)
            app.config[name] = coerce(name, value)
            changed.append(name)

    app.logger.debug(u"Loaded configuration file {x}: {y}".format(x=path, y=", ".join(changed)))
    return changed


def set_option(option):
    """
    Apply a single section.key=value override, as supplied by --set on the command line

    :param option: the override string
    :return: the setting name which was changed
    """
    if "=" not in option or "." not in option.split("=", 1)[0]:
        raise ConfigurationException(u"{x}: overrides must look like section.key=value".format(x=option))
    dotted, value = option.split("=", 1)
    section, key = dotted.split(".", 1)
    name = setting_name(section, key)
    app.config[name] = coerce(name, value)
    return name
