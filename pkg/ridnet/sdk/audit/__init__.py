"""
Finite-difference audits of analytic gradients, grouped by scope (single
operations, graph branches and blocks, the full model and its losses).
"""

from .audit_case import AuditCase, AuditResult

__all__ = ["AuditCase", "AuditResult"]
