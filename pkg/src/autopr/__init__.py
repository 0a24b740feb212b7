"""autopr: research-paper PDFs to platform-adapted posts, plus the judge harness."""

__version__ = "0.1.0"
