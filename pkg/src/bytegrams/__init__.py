"""Byte n-gram malware classification toolkit.

Pipeline stages: corpus ingestion/generation -> n-gram dictionary extraction
-> feature selection and vectorization -> classifiers -> stratified
cross-validation -> dataset-generality experiments -> figures and summaries.
"""

__version__ = "0.1.0"
