# SPDX-License-Identifier: Apache-2.0
"""Python access to the dpose body model, data generator, metrics and checks."""

from ._dpose import (  # noqa: F401
    Body,
    DposeError,
    generate_sample,
    gradcheck,
    mpjpe,
    pa_mpjpe,
    preset_config,
    read_dataset,
    umeyama,
)
