import pytest
from pydantic import ValidationError

from config.settings import Settings
from models import CommandType, Modality, NoiseConfig, ObserverConfig, RunConfig


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("LIE_VIO_THREADS", "3")
    monkeypatch.setenv("LIE_VIO_GRAMIAN_MU", "0.01")
    s = Settings()
    assert s.THREADS == 3
    assert s.GRAMIAN_MU == 0.01
    assert s.GRAVITY_DIRECTION == [0.0, 0.0, -1.0]


def test_settings_read_dotenv_file(monkeypatch, tmp_path):
    (tmp_path / ".env").write_text("LIE_VIO_LOG_LEVEL=DEBUG\nLIE_VIO_K_R=2.5\n", encoding="utf-8")
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LIE_VIO_LOG_LEVEL", raising=False)
    monkeypatch.delenv("LIE_VIO_K_R", raising=False)
    s = Settings()
    assert s.LOG_LEVEL == "DEBUG"
    assert s.K_R == 2.5
    assert Settings.model_config["env_prefix"] == "LIE_VIO_"


def test_modality_override_reaches_both_sections():
    cfg = RunConfig(command="simulate", modality="mono")
    assert cfg.command is CommandType.SIMULATE
    assert cfg.scenario.modality is Modality.MONO_BEARING
    assert cfg.euroc.modality is Modality.MONO_BEARING


def test_euroc_command_needs_dataset_path():
    with pytest.raises(ValidationError):
        RunConfig(command="euroc")


def test_observer_weights_from_noise():
    cfg = ObserverConfig.from_noise(NoiseConfig(), 200.0)
    assert cfg.v_velocity == pytest.approx(0.095 ** 2 / 200.0)
    assert cfg.q_relpos == pytest.approx(0.05 ** 2)
    quiet = ObserverConfig.from_noise(NoiseConfig.noiseless(), 200.0)
    assert quiet.v_velocity == quiet.q_bearing == 1e-6


def test_measurement_scale_inflates_visual_noise_only():
    noise = NoiseConfig(measurement_scale=2.0)
    assert noise.effective_relpos_std == pytest.approx(0.1)
    assert noise.effective_bearing_rad == pytest.approx(2.0 * 0.5 * 3.141592653589793 / 180.0)
    assert noise.gyro_std == 0.0035
