"""
This module contains all the model objects used by the UFP toolkit.

All objects contained in sub-modules are also imported here, so that they can be imported elsewhere directly from this
module.

For example, instead of

::

    from service.models.ufp import Ufp

you can do

::

    from service.models import Ufp

"""

from service.models.audio import AudioBuffer
from service.models.spectrogram import StftParams, Spectrogram
from service.models.ufp import Ufp, TileAugment, RealisedAugment, UfpFormatException
from service.models.trials import Trial, TrialListException
from service.models.reports import TrainReport, EvalReport, AttackTable, BenchTable
