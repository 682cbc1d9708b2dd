import pytest

from camvitals.config import PipelineConfig, load_config


def test_defaults_match_reference_setup():
    cfg = PipelineConfig()
    assert cfg.crop == (300, 300, 200, 0)
    assert cfg.hr_band == (0.7, 2.5)
    assert cfg.rr_band == (0.2, 0.5)
    assert cfg.filter_order == 3
    assert (cfg.video_window, cfg.video_hop, cfg.video_fft) == (256, 30, 4096)
    assert (cfg.physio_window, cfg.physio_hop, cfg.physio_fft) == (1024, 128, 8192)
    assert cfg.scalarization == "spherical_log_map"


def test_stft_properties_build_specs():
    cfg = PipelineConfig()
    assert cfg.video_stft.fft_size == 4096
    assert cfg.physio_stft.window_len == 1024


def test_load_config_overrides_and_coerces(tmp_path):
    p = tmp_path / "pipeline.cfg"
    p.write_text(
        "# comment line\n"
        "crop_left = 0\n"
        "crop_right=0   # trailing comment\n"
        "\n"
        "hr_high = 3.0\n"
        "scalarization = green_chromaticity\n")
    cfg = load_config(p)
    assert cfg.crop_left == 0 and isinstance(cfg.crop_left, int)
    assert cfg.crop_right == 0
    assert cfg.hr_high == 3.0 and isinstance(cfg.hr_high, float)
    assert cfg.scalarization == "green_chromaticity"
    # untouched keys keep defaults
    assert cfg.crop_top == 200


def test_load_config_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("croq_left = 0\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_load_config_rejects_unparseable_value(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("crop_left = wide\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_load_config_rejects_missing_equals(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("crop_left 0\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(scalarization="principal_component")
    with pytest.raises(ValueError):
        PipelineConfig(hr_low=2.5, hr_high=0.7)
    with pytest.raises(ValueError):
        PipelineConfig(rr_low=0.0)
