"""Urban cellular digital twin.

Generates wireless network datasets by combining a procedural city scene,
ray-traced-style propagation, vehicular mobility, diurnal background
traffic, and a discrete-event packet simulation; then analyzes the data
and reproduces a global/local/naive latency prediction experiment.
"""

__version__ = "0.1.0"
