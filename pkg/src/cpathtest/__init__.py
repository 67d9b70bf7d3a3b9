"""Path-driven unit test generation for C projects.

Functions are split into statement-level control-flow graphs, each execution
path becomes one LLM-synthesized Unity test, and every test is compiled, run
under AddressSanitizer and repaired in isolation before the survivors are
merged into a single suite measured with gcov.
"""

from .config import PipelineConfig, load_config
from .pipeline import RunReport, report_summary, run_pipeline

__all__ = ["PipelineConfig", "RunReport", "load_config", "report_summary", "run_pipeline"]
__version__ = "0.1.0"
