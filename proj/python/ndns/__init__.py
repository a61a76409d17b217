# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Sigma-delta network speech denoising pipeline.

Thin wrapper over the compiled extension; see the package README for the
CLI and file formats.
"""

from ndns._core import (  # noqa: F401
    AudioClip,
    FormatError,
    InvalidArgumentError,
    IoError,
    MixtureRecord,
    OpsCounter,
    SdnnNetwork,
    Spectrogram,
    StftConfig,
    __version__,
    buffer_latency_s,
    cap_db,
    count_params,
    denoise,
    istft,
    load_manifest,
    load_model,
    load_triple,
    magnitude_phase,
    make_network,
    mix_at_snr,
    model_size_bytes,
    network_latency_s,
    pdp_proxy_mops,
    power_proxy_mops_s,
    read_wav,
    recombine,
    save_model,
    si_snr_db,
    si_snr_improvements,
    stft,
    synthesize_dataset,
    weight_count,
    write_wav,
)
