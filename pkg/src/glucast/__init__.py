"""glucast: blood-glucose time-series forecasting with a multitask VAE-RNN.

The toolkit bundles a from-scratch VAE with recurrent encoder/decoder
(joint reconstruction/imputation and horizon prediction), classical and
RNN baselines, statistical and clinical accuracy metrics (Clarke Error
Grid), a deterministic training/benchmark harness, and a CLI that emits
CSV tables plus SVG figures.
"""

__version__ = "0.1.0"
