"""Stinespring dilations of finite-dimensional quantum channels and channel curves."""

from .approx import ApproxDilation, approx_dilation, evaluate
from .channels import ChannelRep, KrausSet, apply, channel_distance, choi_to_kraus, is_cptp
from .diagnostics import curve_distance_sup, hamiltonian_extract, singularity_scan
from .dilation import StinespringDilation, exact_dilation_curve, static_dilation, verify_dilation
from .dynamics import CurveSource, LindbladGenerator, TimeGrid, channel_at, sample_curve

__version__ = "0.1.0"
