"""Two-layer ReLU students under projected gradient descent: soft-label
(teacher-probability) and hard-label training, the provable bounds that
separate them, and the harnesses that measure those bounds empirically.
"""

__version__ = "0.1.0"
