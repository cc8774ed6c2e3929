import factory

from simulation.models import SimParams
from simulation.services.presets import PRESETS
from splines.models import BasisSpec
from studies.models import StudyConfig


def _preset(name: str) -> dict:
    return dict(PRESETS[name][1])


class BasisSpecFactory(factory.Factory):
    """
    Базис по умолчанию для тестов: небольшой k, чтобы подгонки были быстрыми.
    """

    class Meta:
        model = BasisSpec

    k = 8
    m = 1
    domain = None


class SimParamsFactory(factory.Factory):
    """
    Маленький набор данных: 8 субъектов по 40 проб.
    Трейты повторяют именованные наборы параметров.
    """

    class Meta:
        model = SimParams

    n_subjects = 8
    n_trials = 40
    seed = factory.Sequence(lambda n: 1000 + n)

    class Params:
        amp = factory.Trait(**_preset("amp"))
        ampabs = factory.Trait(**_preset("ampabs"))
        phase = factory.Trait(**_preset("phase"))
        wiggly = factory.Trait(**_preset("wiggly_power"))


class StudyConfigFactory(factory.Factory):
    """
    Небольшое исследование: 4 реплики LMMmin и LMMsine.
    """

    class Meta:
        model = StudyConfig

    generator = "amp_abs"
    params = factory.SubFactory(SimParamsFactory, ampabs=True)
    n_reps = 4
    models = ("LMMsine", "LMMmin")
    base_seed = 7
    k = 8
