from typing import Iterable, List, Optional
import inspect
import logging
import pkgutil

from ridnet.sdk.audit.audit_case import AuditCase, AuditResult
from ridnet.sdk.models.canonical_types import AuditScope
from ridnet.sdk.utils.timer import Timer

logger = logging.getLogger(__name__)


class Orchestrator:
    """
    Discovers and runs the gradient audits of the requested scopes.
    """

    def __init__(self, scopes: Iterable[AuditScope], seed: int = 0, epsilon: float = 1e-4):
        self.scopes = [AuditScope(s) for s in scopes]
        self.seed = seed
        self.epsilon = epsilon
        self.cases: List[AuditCase] = []

    def discover_cases(self):
        """
        Finds and instantiates all concrete AuditCase subclasses in scope.
        """
        import ridnet.sdk.audit as audit_module

        for _, name, _ in pkgutil.walk_packages(audit_module.__path__, audit_module.__name__ + "."):
            module = __import__(name, fromlist=[""])
            for cls_name, obj in inspect.getmembers(module, inspect.isclass):
                if (
                    issubclass(obj, AuditCase)
                    and obj.__module__ == module.__name__
                    and not inspect.isabstract(obj)
                    and not cls_name.startswith("_")
                    and obj.scope in self.scopes
                ):
                    self.cases.append(obj(seed=self.seed, epsilon=self.epsilon))
        self.cases.sort(key=lambda case: (list(AuditScope).index(case.scope), case.name))

    def run(self, only: Optional[str] = None) -> List[AuditResult]:
        """
        Executes every discovered audit (or those whose name contains `only`).
        """
        if not self.cases:
            self.discover_cases()
        results = []
        for case in self.cases:
            if only and only not in case.name:
                continue
            with Timer() as timer:
                result = case.run()
            logger.info(
                "%s/%s: max relative error %.3e over %d coordinates (%.1fs)",
                result.scope.value,
                result.name,
                result.check.max_relative_error,
                result.check.checked,
                timer.elapsed,
            )
            results.append(result)
        return results
