"""Paragraph-aware speech synthesis toolkit."""

from ._paratts import (
    corpus_stats,
    dtw,
    frame_prosody,
    generate_synthetic_corpus,
    mcd_dtw,
    mel_spectrogram,
    model_config,
    parameter_count,
    pattern_analysis,
    pause_rmse,
    pearson,
    position_codes,
    run_cli,
)


def parse_key_value(text):
    """Turns `key = value` report text into a dict of strings."""
    out = {}
    for line in text.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


__all__ = [
    "corpus_stats",
    "dtw",
    "frame_prosody",
    "generate_synthetic_corpus",
    "mcd_dtw",
    "mel_spectrogram",
    "model_config",
    "parameter_count",
    "parse_key_value",
    "pattern_analysis",
    "pause_rmse",
    "pearson",
    "position_codes",
    "run_cli",
]
