class VortexFluxException(Exception):
    '''errno indicates the exit code for the interpreter, because this
    exception typically results in a return of control to the terminal.
    A message is optional; errno 0 means a clean early exit
    '''

    def __init__(self, errno, message=None):
        super().__init__(message or 'vortexflux error {0}'.format(errno))
        self.errno = errno
        self.message = message


class CheckFailure(VortexFluxException):
    '''one or more fatal invariant checks failed'''

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__(1, 'Failed checks: {0}'.format(', '.join(self.failed)))


class ConfigurationError(VortexFluxException):
    def __init__(self, message, key=None, line=None):
        self.reason = message
        self.key = key
        self.line = line
        where = ''
        if key is not None:
            where = ' [{0}'.format(key)
            where += ' (line {0})]'.format(line) if line is not None else ']'
        super().__init__(2, message + where)


class DataError(VortexFluxException):
    def __init__(self, message):
        super().__init__(3, message)


class SolverError(VortexFluxException):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(4, '{0} (residual {1:.3e})'.format(message, residual))


class StabilityError(VortexFluxException):
    '''an explicit step was refused; admissible_dt is the largest step that would be accepted'''

    def __init__(self, dt, admissible_dt):
        self.dt = dt
        self.admissible_dt = admissible_dt
        super().__init__(5, 'Time step {0:.6g} exceeds the stability bound {1:.6g}'.format(dt, admissible_dt))


class PicardFailure(VortexFluxException):
    def __init__(self, time, residuals):
        self.time = time
        self.residuals = list(residuals)
        super().__init__(
            6,
            'Fixed-point loop did not converge at t={0:.6g} after {1} iterations (last residual {2:.3e}); '
            'try a smaller dt or a larger R'.format(time, len(self.residuals), self.residuals[-1] if self.residuals else float('nan')),
        )


class DenseCapExceeded(VortexFluxException):
    def __init__(self, nodes, cap):
        self.nodes = nodes
        self.cap = cap
        super().__init__(
            7, 'Dense Green assembly refused: {0} nodes exceeds the cap of {1}; use solve_h instead'.format(nodes, cap)
        )


class CertificationError(VortexFluxException):
    def __init__(self, message, probes):
        self.probes = list(probes)
        super().__init__(8, message)
