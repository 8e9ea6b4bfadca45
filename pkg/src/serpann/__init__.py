"""Speech emotion recognition with log-mel CNNs and MFCC-gram Transformers.

The pipeline: WAV -> 32 kHz -> STFT (1024/320) -> 64-bin log-mel
(CNN6/10/14 input) or 40-coefficient MFCC-gram (Transformer input), with
SpecAugment, a small numpy autodiff engine, Adam training, and macro-F1
evaluation.  Everything runs on CPU and is reproducible from a seed.
"""

__version__ = "0.1.0"
