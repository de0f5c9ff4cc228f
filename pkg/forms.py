"""Run configuration: sources, validation and the VORTEX_THREADS bound."""

import json
import os
from dataclasses import asdict, fields

from wtforms import Form, FloatField, IntegerField
from wtforms.validators import NumberRange, StopValidation, ValidationError

from errors import ConfigurationError
from models import RunConfig


def numeric(form, field):
    value = field.object_data
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise StopValidation('Must be a number.')


def integral(form, field):
    value = field.object_data
    if isinstance(value, bool) or not isinstance(value, int):
        raise StopValidation('Must be an integer.')


def positive(form, field):
    if not field.data > 0:
        raise ValidationError('Must be positive.')


class RunConfigForm(Form):
    """Form for validating a run configuration."""

    r_min = FloatField('r_min', validators=[numeric, positive, NumberRange(max=2.0)])
    r_max = FloatField('r_max', validators=[numeric, NumberRange(min=30.0)])
    per_decade = IntegerField('per_decade', validators=[integral, NumberRange(min=8)])
    h_outer = FloatField('h_outer', validators=[numeric, positive])
    K = IntegerField('K', validators=[integral, NumberRange(min=0)])
    n_theta = IntegerField('n_theta', validators=[integral, NumberRange(min=4)])
    profile_tol = FloatField('profile_tol', validators=[numeric, NumberRange(min=1e-12)])
    residual_tol = FloatField('residual_tol', validators=[numeric, positive])
    orth_tol = FloatField('orth_tol', validators=[numeric, positive])
    seed = IntegerField('seed', validators=[integral, NumberRange(min=0)])
    threads = IntegerField('threads', validators=[integral, NumberRange(min=1)])

    def validate_n_theta(self, field):
        n = field.data
        if isinstance(n, int) and n & (n - 1):
            raise ValidationError('Must be a power of two.')
        if isinstance(n, int) and isinstance(self.K.data, int) and n < 4 * self.K.data + 4:
            raise ValidationError('Must be at least 4K + 4.')


def validated(values):
    """RunConfig from a mapping, or ConfigurationError listing every problem."""

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError("unknown configuration keys", keys=unknown)

    form = RunConfigForm(data=values)
    if not form.validate():
        raise ConfigurationError("invalid configuration", errors=form.errors)
    return RunConfig(**{name: form[name].data for name in known})


def load_config(path=None, overrides=None, environ=None):
    """Defaults, then the JSON file at `path`, then non-None `overrides`.

    VORTEX_THREADS, when set, is the default and the upper bound for threads.
    """

    environ = os.environ if environ is None else environ
    values = asdict(RunConfig())
    explicit = set()

    if path is not None:
        try:
            with open(path) as src:
                loaded = json.load(src)
        except OSError as exc:
            raise ConfigurationError("cannot read config file", path=str(path),
                                     reason=str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError("config file is not valid JSON", path=str(path),
                                     reason=str(exc)) from exc
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a JSON object", path=str(path))
        values.update(loaded)
        explicit.update(loaded)

    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
            explicit.add(key)

    bound = environ.get('VORTEX_THREADS')
    if bound:
        try:
            bound = int(bound)
        except ValueError as exc:
            raise ConfigurationError("VORTEX_THREADS must be an integer",
                                     value=bound) from exc
        requested = values["threads"] if "threads" in explicit else bound
        if isinstance(requested, int):
            values["threads"] = max(1, min(requested, bound))

    return validated(values)
