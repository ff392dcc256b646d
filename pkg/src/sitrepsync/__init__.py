"""Multi-synchronous collaborative editing for situation reports.

Desktop clients converge in real time through differential synchronization;
mobile field clients receive locked document regions as tasks and push
isolated updates back when connectivity allows.
"""

__version__ = "0.1.0"
