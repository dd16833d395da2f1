"""Generalised Koopman modes for a family of observables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dmd_core import MpEdmdModel
from .kernels import KernelSpec, SmoothingConfig
from .rigged import observable_coefficients, wave_packets

__all__ = ["ModeSweep", "generalized_modes"]


@dataclass
class ModeSweep:
    """Mode vectors over an angle grid.

    Attributes
    ----------
    thetas : ndarray, shape (T,)
    c : ndarray, shape (l, T)
        ``c[p, t]`` pairs the mean packet with observable ``p``'s packet.
    mean_packets : ndarray, shape (r, T)
        Mean of the per-observable packets, in eigencoordinates.
    """

    thetas: np.ndarray
    c: np.ndarray
    mean_packets: np.ndarray


def generalized_modes(
    model: MpEdmdModel,
    observables: Sequence,
    PsiX,
    weights,
    kernel: KernelSpec,
    config: SmoothingConfig,
) -> ModeSweep:
    """Compute ``[c_theta]_p = mean_packet^* packet_p`` for each observable.

    Parameters
    ----------
    observables : sequence of array_like, or 2-D array of shape (M, l)
        Samples of each observable on the rows of ``PsiX``.  A 2-D array is
        read column-wise.
    """
    if isinstance(observables, np.ndarray) and observables.ndim == 2:
        obs = [observables[:, p] for p in range(observables.shape[1])]
    else:
        obs = list(observables)
    if len(obs) == 0:
        raise ValueError("need at least one observable")
    packets = []
    for g in obs:
        coeffs = observable_coefficients(model, PsiX, weights, g)
        packets.append(wave_packets(model, coeffs, kernel, config, with_measure=False).packets_eig)
    stack = np.stack(packets)  # (l, r, T)
    mean = stack.mean(axis=0)
    c = np.einsum("rt,prt->pt", mean.conj(), stack)
    return ModeSweep(thetas=np.asarray(config.thetas).copy(), c=c, mean_packets=mean)
