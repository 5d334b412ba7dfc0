from core.instrument import InstrumentError
from core.linop import ChannelError, NonErgodicError, NotMixingError
from core.asymptotics import InitialStateError
from core.trajectory import DiagnosticsError, EnumerationCapError, TrajectoryError
from models import ModelError
from records.modelspec import ModelSpecError


class CLIError(Exception):
    """Base exception for CLI errors."""
    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code

class ParseError(CLIError):
    def __init__(self, message: str):
        super().__init__(f"✗ {message}", exit_code=2)

class PreconditionError(CLIError):
    def __init__(self, message: str):
        super().__init__(f"✗ {message}", exit_code=3)

class ResourceCapError(CLIError):
    def __init__(self, message: str):
        super().__init__(f"✗ {message}", exit_code=4)


def from_exception(err: Exception) -> CLIError:
    """Map a library exception to the CLI error carrying the right exit code."""
    if isinstance(err, CLIError):
        return err
    if isinstance(err, EnumerationCapError):
        return ResourceCapError(str(err))
    if isinstance(err, (NonErgodicError, NotMixingError, InitialStateError, DiagnosticsError)):
        return PreconditionError(str(err))
    if isinstance(err, (ModelSpecError, InstrumentError, ChannelError, ModelError, TrajectoryError, ValueError)):
        return ParseError(str(err))
    return CLIError(f"✗ {type(err).__name__}: {err}", exit_code=1)
