"""Config parsing, validation, derived quantities and hashing."""

import pytest

from lecollapse.config import (
    ConfigError,
    ExperimentConfig,
    MODES,
    build_collapse_setup,
    build_compare_setup,
    build_fp_setup,
    build_lattice_model,
    build_wave_setup,
    load_config,
)


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def load_text(tmp_path, text):
    return load_config(write_cfg(tmp_path, text))


# --- parsing the key=value format ---


def test_minimal_collapse_config_derives_n_c(tmp_path):
    # n_a = 100 at lam = 1 gives N_c = n_a * lam^3 = 100
    cfg = load_text(tmp_path, "mode = collapse\n")
    assert cfg.mode == "collapse"
    assert cfg.params["n_c"] == pytest.approx(100.0)
    assert cfg.seeds == (0,)


def test_n_c_scales_with_lam_cubed(tmp_path):
    cfg = load_text(tmp_path, "mode = collapse\nlam = 2.0\ntau = 2.0\n")
    assert cfg.params["n_c"] == pytest.approx(100.0 * 8.0)


def test_d_coeff_derived_from_lam_and_tau(tmp_path):
    cfg = load_text(tmp_path, "mode = wave\nlam = 3.0\ntau = 2.0\n")
    assert cfg.params["d_coeff"] == pytest.approx(9.0 / 12.0)


def test_inconsistent_d_coeff_error_cites_the_relation(tmp_path):
    with pytest.raises(ConfigError, match=r"D = lam\^2/\(6\*tau\)"):
        load_text(tmp_path, "mode = wave\nlam = 1.0\ntau = 1.0\nd_coeff = 0.5\n")


def test_consistent_d_coeff_is_accepted(tmp_path):
    cfg = load_text(
        tmp_path, "mode = wave\nlam = 1.0\ntau = 1.0\nd_coeff = 0.16666666666666666\n"
    )
    assert cfg.params["d_coeff"] == pytest.approx(1.0 / 6.0)


def test_inconsistent_n_c_error_cites_the_relation(tmp_path):
    with pytest.raises(ConfigError, match=r"N_c = n_a\*lam\^3"):
        load_text(tmp_path, "mode = collapse\nn_a = 100\nn_c = 7\n")


def test_negative_w_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="w"):
        load_text(tmp_path, "mode = collapse\nw = -0.4\n")


def test_parse_error_reports_line_number(tmp_path):
    with pytest.raises(ConfigError, match="line 3"):
        load_text(tmp_path, "mode = collapse\n\nnot a key value pair\n")


def test_empty_value_reports_line_number(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        load_text(tmp_path, "mode = collapse\nw =\n")


def test_duplicate_key_names_both_lines(tmp_path):
    with pytest.raises(ConfigError, match="line 1"):
        load_text(tmp_path, "mode = collapse\nmode = wave\n")


def test_comments_and_blank_lines_are_ignored(tmp_path):
    cfg = load_text(tmp_path, "# a comment\n\nmode = fp\nchannels = 2\n")
    assert cfg.mode == "fp"


def test_unknown_key_names_key_and_mode(tmp_path):
    with pytest.raises(ConfigError, match="quux.*fp|fp.*quux"):
        load_text(tmp_path, "mode = fp\nquux = 3\n")


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(str(tmp_path / "nope.cfg"))


def test_mode_is_required(tmp_path):
    with pytest.raises(ConfigError, match="mode"):
        load_text(tmp_path, "w = 0.4\n")


def test_unknown_mode_is_rejected():
    with pytest.raises(ConfigError, match="mode"):
        load_config(overrides={"mode": "teleport"})


def test_non_numeric_value_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        load_text(tmp_path, "mode = collapse\nw = banana\n")


def test_nan_is_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_text(tmp_path, "mode = collapse\nw = nan\n")


# --- overrides and the seed machinery ---


def test_cli_override_beats_file_value(tmp_path):
    path = write_cfg(tmp_path, "mode = collapse\nseed = 3\n")
    cfg = load_config(path, {"seed": "11"})
    assert cfg.seed == 11


def test_subcommand_conflicting_with_file_mode_errors(tmp_path):
    path = write_cfg(tmp_path, "mode = wave\n")
    with pytest.raises(ConfigError, match="mode = wave.*collapse"):
        load_config(path, {"mode": "collapse"})


def test_seed_range_is_inclusive():
    cfg = load_config(overrides={"mode": "sweep", "seeds": "3..6"})
    assert cfg.seeds == (3, 4, 5, 6)


def test_backwards_seed_range_is_rejected():
    with pytest.raises(ConfigError, match="seeds"):
        load_config(overrides={"mode": "sweep", "seeds": "6..3"})


def test_garbled_seed_range_is_rejected():
    with pytest.raises(ConfigError, match="seeds"):
        load_config(overrides={"mode": "sweep", "seeds": "3..x"})


def test_sweep_rejects_single_seed_key():
    with pytest.raises(ConfigError, match="seed"):
        load_config(overrides={"mode": "sweep", "seed": "4"})


def test_single_run_modes_reject_seed_range():
    with pytest.raises(ConfigError, match="seed range"):
        load_config(overrides={"mode": "collapse", "seeds": "0..9"})


def test_sweep_default_is_ten_seeds():
    cfg = load_config(overrides={"mode": "sweep"})
    assert cfg.seeds == tuple(range(10))


def test_trajectory_override_only_for_collapse_modes():
    cfg = load_config(overrides={"mode": "collapse", "trajectory": "true"})
    assert cfg.params["record_every"] >= 1
    with pytest.raises(ConfigError, match="trajectory"):
        load_config(overrides={"mode": "wave", "trajectory": "true"})


def test_formats_are_canonicalised():
    cfg = load_config(overrides={"mode": "fp", "formats": "svg,csv"})
    assert cfg.formats == ("csv", "svg")


def test_unknown_format_is_rejected():
    with pytest.raises(ConfigError, match="formats"):
        load_config(overrides={"mode": "fp", "formats": "csv,png"})


# --- mode-specific validation ---


def test_exact_single_channel_gets_default_track():
    cfg = load_config(overrides={"mode": "exact"})
    assert cfg.params["track_1"] == (0,)


def test_exact_multi_channel_requires_explicit_tracks():
    # which atom belongs to which channel cannot be guessed
    with pytest.raises(ConfigError, match="track"):
        load_config(overrides={"mode": "exact", "channels": "2", "track_1": "0"})
    cfg = load_config(
        overrides={"mode": "exact", "channels": "2", "track_1": "0", "track_2": "1"}
    )
    assert cfg.params["track_2"] == (1,)


def test_collapse_p0_must_be_a_distribution():
    with pytest.raises(ConfigError, match="p0"):
        load_config(overrides={"mode": "collapse", "p0": "0.3,0.3"})


def test_collapse_defaults_to_uniform_background():
    cfg = load_config(overrides={"mode": "collapse"})
    assert cfg.params["f_init"] == pytest.approx(0.4)
    assert cfg.params["advance_fields"] is False


def test_seed_regions_switch_advance_fields_on():
    cfg = load_config(
        overrides={
            "mode": "collapse",
            "seed_region_1": "0,4",
            "seed_region_2": "28,32",
        }
    )
    assert cfg.params["f_init"] is None
    assert cfg.params["advance_fields"] is True


def test_regions_and_f_init_together_are_rejected():
    with pytest.raises(ConfigError, match="not both"):
        load_config(
            overrides={
                "mode": "collapse",
                "f_init": "0.4",
                "seed_region_1": "0,4",
                "seed_region_2": "28,32",
            }
        )


def test_region_count_must_match_channels():
    with pytest.raises(ConfigError, match="seed_region"):
        load_config(
            overrides={
                "mode": "collapse",
                "p0": "0.2,0.3,0.5",
                "seed_region_1": "0,4",
                "seed_region_2": "28,32",
            }
        )


def test_region_must_fit_inside_the_grid():
    with pytest.raises(ConfigError, match="extent"):
        load_config(
            overrides={
                "mode": "collapse",
                "seed_region_1": "0,4",
                "seed_region_2": "28,40",
            }
        )


def test_compare_rejects_seed_regions():
    with pytest.raises(ConfigError, match="f_init"):
        load_config(
            overrides={
                "mode": "compare",
                "seed_region_1": "0,4",
                "seed_region_2": "12,16",
            }
        )


def test_compare_rejects_advancing_fields():
    with pytest.raises(ConfigError, match="advance_fields"):
        load_config(overrides={"mode": "compare", "advance_fields": "true"})


def test_wave_dt_fraction_capped_at_monotone_limit():
    with pytest.raises(ConfigError, match="dt_fraction"):
        load_config(overrides={"mode": "wave", "dt_fraction": "1.5"})


def test_fp_resolution_floor():
    with pytest.raises(ConfigError, match="resolution"):
        load_config(overrides={"mode": "fp", "resolution": "2"})


def test_fp_channels_limited_to_two_or_three():
    with pytest.raises(ConfigError, match="channels"):
        load_config(overrides={"mode": "fp", "channels": "4", "p0": "0.25,0.25,0.25,0.25"})


# --- hashing and canonical source ---


def test_hash_ignores_out_dir():
    a = load_config(overrides={"mode": "collapse", "out": "runs/a"})
    b = load_config(overrides={"mode": "collapse", "out": "runs/b"})
    assert a.config_hash() == b.config_hash()
    assert a.out_dir != b.out_dir


def test_hash_sees_parameter_changes():
    a = load_config(overrides={"mode": "collapse"})
    b = load_config(overrides={"mode": "collapse", "w": "0.3"})
    assert a.config_hash() != b.config_hash()


def test_hash_stable_across_spelling(tmp_path):
    # additional whitespace and comments collapse to the same canonical source
    one = load_text(tmp_path, "mode = fp\nn_steps = 100\n")
    two = load_text(tmp_path, "# hi\n  mode   =  fp\n\nn_steps=100\n")
    assert one.config_hash() == two.config_hash()


def test_defaulted_and_explicit_values_hash_alike():
    a = load_config(overrides={"mode": "collapse"})
    b = load_config(overrides={"mode": "collapse", "f_init": "0.4"})
    assert a.config_hash() == b.config_hash()


# --- builders construct real module objects ---


def test_every_mode_builds_on_defaults():
    builders = {
        "exact": build_lattice_model,
        "wave": build_wave_setup,
        "collapse": build_collapse_setup,
        "fp": build_fp_setup,
        "sweep": build_collapse_setup,
        "compare": build_compare_setup,
    }
    assert set(builders) == set(MODES)
    for mode, build in builders.items():
        cfg = load_config(overrides={"mode": mode})
        assert isinstance(cfg, ExperimentConfig)
        assert build(cfg) is not None


def test_collapse_builder_honours_max_steps_override():
    cfg = load_config(overrides={"mode": "collapse", "max_steps": "17"})
    setup = build_collapse_setup(cfg)
    assert setup.max_steps == 17
