"""Scalar wave-optics core: complex fields, angular-spectrum propagation,
inline amplitude hologram recording and reconstruction.

All computations are double precision. The propagation operator is the
band-limited angular spectrum method: the field's DFT spectrum is multiplied
by H(fx, fy) = exp(i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2)) on the
propagating band (1/lambda^2 >= fx^2 + fy^2) and by 0 beyond it (evanescent
cutoff). With this convention the operator is unitary on the propagating
band, so propagate(., -z) inverts propagate(., +z) and energy is conserved.

No zero-padding is applied before propagation; wrap-around of the circular
convolution is an accepted part of the simulated channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ComplexField",
    "IntensityImage",
    "propagate",
    "record_hologram",
    "reconstruct",
]


@dataclass(frozen=True)
class ComplexField:
    """A 2-D complex amplitude grid plus its physical sampling metadata.

    Attributes:
        data: complex128 array of shape (height, width), dimensionless
            amplitude. Must be finite everywhere.
        pitch: sampling interval in meters, identical on both axes.
        wavelength: optical wavelength in meters.
    """

    data: np.ndarray
    pitch: float
    wavelength: float

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 2:
            raise ValueError(f"field must be a 2-D grid of at least 2x2 samples, got shape {data.shape}")
        if not (float(self.pitch) > 0.0):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if not (float(self.wavelength) > 0.0):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite amplitudes")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def intensity(self) -> "IntensityImage":
        """Squared modulus of the amplitude, keeping the sampling metadata."""
        return IntensityImage(np.abs(self.data) ** 2, pitch=self.pitch, wavelength=self.wavelength)


@dataclass(frozen=True)
class IntensityImage:
    """A 2-D grid of nonnegative real intensities.

    pitch/wavelength are optional sampling metadata; they are set by
    record_hologram so that reconstruct() knows the grid it operates on,
    and are absent on purely electronic images (e.g. after the sensor
    channel).
    """

    data: np.ndarray
    pitch: float | None = None
    wavelength: float | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError(f"intensity image must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("intensity image contains non-finite values")
        if np.any(data < 0.0):
            raise ValueError("intensity image contains negative values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _transfer_function(shape: tuple[int, int], pitch: float, wavelength: float, distance: float) -> np.ndarray:
    """Band-limited angular-spectrum transfer function on the DFT frequency grid.

    Frequencies follow the standard DFT layout f_k = k / (N * pitch) with
    negative frequencies in the upper half (numpy fftfreq convention).
    """
    fy = np.fft.fftfreq(shape[0], d=pitch)
    fx = np.fft.fftfreq(shape[1], d=pitch)
    radicand = wavelength ** -2 - (fy[:, None] ** 2 + fx[None, :] ** 2)
    h = np.zeros(shape, dtype=np.complex128)
    band = radicand >= 0.0
    h[band] = np.exp(1j * 2.0 * np.pi * distance * np.sqrt(radicand[band]))
    return h


def propagate(field: ComplexField, distance: float) -> ComplexField:
    """Propagate a complex field by `distance` meters (negative = backward).

    Output geometry (shape, pitch, wavelength) equals the input's. For
    fields whose spectrum lies inside the propagating band the operation is
    unitary: energy is preserved and propagate(., -z) undoes propagate(., z).
    """
    if not np.isfinite(distance):
        raise ValueError(f"propagation distance must be finite, got {distance}")
    h = _transfer_function(field.data.shape, field.pitch, field.wavelength, distance)
    out = np.fft.ifft2(np.fft.fft2(field.data) * h)
    return ComplexField(out, pitch=field.pitch, wavelength=field.wavelength)


def record_hologram(object_field: ComplexField) -> IntensityImage:
    """Inline amplitude hologram: interference of the object light with the
    co-axial unit plane reference, I = |O + 1|^2."""
    intensity = np.abs(object_field.data + 1.0) ** 2
    return IntensityImage(intensity, pitch=object_field.pitch, wavelength=object_field.wavelength)


def reconstruct(
    hologram: IntensityImage,
    distance: float,
    pitch: float | None = None,
    wavelength: float | None = None,
) -> IntensityImage:
    """Reconstruct a recorded page: back-propagate the hologram intensity by
    -distance and take the squared modulus.

    The result deliberately keeps the direct-light and conjugate-light
    (twin-image) artifacts of inline holography; nothing is removed.
    pitch/wavelength default to the hologram's own metadata.
    """
    pitch = hologram.pitch if pitch is None else pitch
    wavelength = hologram.wavelength if wavelength is None else wavelength
    if pitch is None or wavelength is None:
        raise ValueError("hologram carries no sampling metadata; pass pitch and wavelength explicitly")
    field = ComplexField(hologram.data.astype(np.complex128), pitch=pitch, wavelength=wavelength)
    back = propagate(field, -distance)
    return back.intensity()
