from .bcsk import run_bcsk
from .ber import ber_experiment, run_ber
from .demodulation import run_demodulation
from .export import export_result
from .impulse import run_impulse
from .modulation import run_modulation
from .scenario import Scenario, load_scenario, run_manifest
from .simulate import run_simulation
from .validate import run_validate
