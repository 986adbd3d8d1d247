"""Localisation of a direct sound source and its first-order reflections
from time-domain HOA covariance matrices.

Modules
-------
sphharm   real spherical harmonics, direction grid, angular geometry
roomsim   shoebox image sources and plane-wave HOA encoding
ebdsp     covariance estimation, EB-MVDR and EB-MUSIC spectra
sps       Gaussian labels, normalisation and peak picking on the 60x120 grid
nn        dense / transposed-convolution kernels, BCE loss, Adam
dcnn      the FC + deconvolution network, training and model files
dataset   dataset generation, record files, WAV input
metrics   25-degree matching, recall / precision / error statistics
evaluation  experiment runs, reports and heatmaps
"""

__version__ = "0.1.0"
