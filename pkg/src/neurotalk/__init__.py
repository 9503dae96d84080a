"""EEG-to-text and EEG-to-MFCC modelling on a numpy autodiff core."""

__version__ = "0.1.0"
