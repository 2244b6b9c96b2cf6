"""Learned feedback loop for 3D hand pose estimation from depth images.

A predictor CNN gives an initial pose, a synthesizer network renders a depth
image for a pose, and an updater network compares the observed and rendered
images to propose a pose correction, iterated a few times.
"""
__version__ = "0.1.0"
