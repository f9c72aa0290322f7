import pytest

from pistonlab.config import Settings
from pistonlab.errors import ConfigurationError, InvalidInputError


def test_defaults():
    settings = Settings()
    assert settings.ladder_rungs == 7
    assert settings.ladder_ratio == 2.0
    assert settings.gradient_step == 1e-3
    assert settings.box_method == "orbit"
    assert settings.workers == 1


def test_from_env_reads_prefixed_variables():
    environ = {
        "PISTONLAB_LADDER_RUNGS": "9",
        "PISTONLAB_TAIL_RTOL": "1e-16",
        "PISTONLAB_BOX_METHOD": "modes",
        "UNRELATED": "x",
    }
    settings = Settings.from_env(environ)
    assert settings.ladder_rungs == 9
    assert isinstance(settings.ladder_rungs, int)
    assert settings.tail_rtol == 1e-16
    assert settings.box_method == "modes"


def test_from_env_without_variables_gives_defaults():
    assert Settings.from_env({}) == Settings()


def test_with_overrides_accepts_prefixed_and_mixed_case_keys():
    settings = Settings().with_overrides(
        {"PISTONLAB_Workers": "4", "Null_Epsilon": 1e-9}
    )
    assert settings.workers == 4
    assert settings.null_epsilon == 1e-9


def test_with_overrides_leaves_original_untouched():
    base = Settings()
    base.with_overrides({"ladder_rungs": 8})
    assert base.ladder_rungs == 7


class TestRejectedOverrides:
    """Bad keys and values raise ConfigurationError."""

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="Unknown setting"):
            Settings().with_overrides({"no_such_setting": 1})

    @pytest.mark.parametrize("value", [0, -1, "-2.5", "nan", "inf"])
    def test_nonpositive_or_nonfinite(self, value):
        with pytest.raises(ConfigurationError):
            Settings().with_overrides({"tail_rtol": value})

    def test_uncastable(self):
        with pytest.raises(ConfigurationError, match="Invalid value"):
            Settings().with_overrides({"ladder_rungs": "many"})

    @pytest.mark.parametrize("value", ["7.9", 7.9, "2.5e0"])
    def test_fractional_integer(self, value):
        with pytest.raises(ConfigurationError, match="must be an integer"):
            Settings().with_overrides({"ladder_rungs": value})

    def test_integral_float_accepted(self):
        assert Settings().with_overrides({"ladder_rungs": "8.0"}).ladder_rungs == 8

    def test_box_method(self):
        with pytest.raises(ConfigurationError, match="box_method"):
            Settings().with_overrides({"box_method": "guess"})

    def test_is_an_input_error(self):
        with pytest.raises(InvalidInputError):
            Settings.from_env({"PISTONLAB_WORKERS": "0"})
