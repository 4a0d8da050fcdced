"""Software twin of a muscle-stimulated beetle flight robot.

Subsystems: stimulation pulse trains and muscle activation, a
dose-response model calibrated to measured induced responses, a
stroke-averaged 6-DOF flight simulator, IMU / motion-capture sensor
emulation, the telemetry analysis pipeline, a statistics battery, a
binary base-station <-> backpack wire protocol with a live server, a
closed-loop stimulation controller, and the `cyborg` experiment CLI.
"""

__version__ = "0.1.0"
