from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
import textwrap
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any
from typing import NoReturn

from ddminlp.bounds import NotMonotoneError
from ddminlp.bounds import select_rule
from ddminlp.dd import DDError
from ddminlp.dd import build
from ddminlp.dd import dump
from ddminlp.dd import make_partitions
from ddminlp.lp import LpError
from ddminlp.model import Model
from ddminlp.model import ModelError
from ddminlp.nodes import ExpressionError
from ddminlp.parser import ParseError
from ddminlp.parser import parse
from ddminlp.sbb import SolveResult
from ddminlp.sbb import SolverConfig
from ddminlp.sbb import SolveStatus
from ddminlp.sbb import solve
from ddminlp.separation import SeparationError

__appname__ = 'ddminlp'
__version__ = 'v0.1.0'

logger = logging.getLogger(__name__)

INISection = dict[str, str]

# app
APP_ROOT = Path(os.environ.get('XDG_CONFIG_HOME', Path.home() / '.config'))
APP_HOME = APP_ROOT / __appname__.lower()
CONFIG_FILE = APP_HOME / 'config.ini'
HELP = textwrap.dedent(
    f"""Usage: {__appname__} [-h] [-V] [-v] [--color COLOR] [options] {{solve,dump-dd}} instance

    Global MINLP solver: spatial branch and bound with decision-diagram cuts.

Commands:
    solve               Solve the instance and print the result table
    dump-dd             Print the decision diagram of one constraint

Options:
    --gap               Relative gap tolerance (default: 0.05)
    --time-limit        Time limit in seconds (default: 5000)
    --partitions        Sub-domain cells per variable (default: 50)
    --width             Maximum nodes per diagram layer (default: 5000)
    --merge             Merge policy [f|g] (default: g)
    --separation        Cut separator [subgradient|exact] (default: subgradient)
    --sg-iters          Subgradient iterations (default: 50)
    --sg-step           Subgradient step size (default: 1.0)
    --cut-rounds        Cut rounds per node (default: 20)
    --exact-fallback    Run the exact separator when the subgradient finds no cut
    --node-limit        Stop after this many nodes (default: none)
    --seed              Reserved, the search is deterministic
    --dump-dd           Print the root diagrams before solving
    --constraint        Constraint number for dump-dd, from 1 (default: 1)
    --kv                Also print key=value lines with full precision
    --config            Read [solver] options from this INI file
    --color             Enable color [always|never] (default: always)
    -V, --version       Print version and exit
    -v, --verbose       Increase output verbosity
    -h, --help          Print this help message

Exit status:
    0 optimal, 1 error, 2 infeasible, 3 time or node limit

Examples:
    {__appname__} solve model.mod --gap 0.0
    {__appname__} solve model.mod --separation exact --kv
    {__appname__} dump-dd model.mod --constraint 1 --partitions 2 --width 2

locations:
  {CONFIG_FILE}"""  # noqa: E501
)

# colors
CYAN = '\033[96m'
GRAY = '\33[37m'
GREEN = '\033[92m'
RED = '\033[91m'
YELLOW = '\033[33m'
END = '\033[0m'

# styles
BOLD = '\033[1m'

EXIT_CODES = {
    SolveStatus.OPTIMAL: 0,
    SolveStatus.INFEASIBLE: 2,
    SolveStatus.TIME_LIMIT: 3,
    SolveStatus.NODE_LIMIT: 3,
}
STATUS_COLORS = {
    SolveStatus.OPTIMAL: GREEN,
    SolveStatus.INFEASIBLE: RED,
    SolveStatus.TIME_LIMIT: YELLOW,
    SolveStatus.NODE_LIMIT: YELLOW,
}

ERRORS = (
    ParseError,
    ModelError,
    ExpressionError,
    NotMonotoneError,
    DDError,
    SeparationError,
    LpError,
    ValueError,
    OSError,
    configparser.Error,
)

# command-line flag -> SolverConfig field
SOLVER_FLAGS = (
    'gap',
    'time_limit',
    'partitions',
    'width',
    'merge',
    'separation',
    'sg_iters',
    'sg_step',
    'cut_rounds',
    'exact_fallback',
    'node_limit',
    'seed',
)


class Console:
    color = True


def colorize(text: str, *styles: str) -> str:
    """Returns the given text with the specified styles applied."""
    # https://no-color.org/
    if os.getenv('NO_COLOR'):
        return text
    if not styles or not Console.color:
        return text
    return ''.join(styles) + text + END


def version() -> None:
    print(f'{__appname__} {__version__}')


@dataclass(slots=True)
class INIFile:
    """An INI file holding solver options under `[solver]`."""

    path: Path
    _config: configparser.ConfigParser = field(default_factory=configparser.ConfigParser)

    def __post_init__(self) -> None:
        if not self.path.exists():
            err_msg = f'INI file path {self.path.name!r} not found.'
            raise FileNotFoundError(err_msg)

    def read(self) -> INIFile:
        self._config.read(self.path, encoding='utf-8')
        if not self._config.sections():
            err_msg = f'No sections found in {self.path.name!r}.'
            raise configparser.NoSectionError(err_msg)
        return self

    def get(self, section: str) -> INISection | None:
        """Returns the section of the INI file with the given name."""
        if not self._config.has_section(section):
            return None
        return dict(self._config[section])


def _number(value: float | None) -> str:
    if value is None:
        return '-'
    return f'{value:.3f}'


def _plain(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(slots=True)
class RunReport:
    """One result row: instance size, bounds, gap, tree counters and time."""

    instance: str
    variables: int
    constraints: int
    status: SolveStatus
    primal: float | None
    dual: float
    gap: float | None
    explored: int
    remaining: int
    time: float
    known: float | None = None

    @classmethod
    def new(cls, instance: str, m: Model, r: SolveResult) -> RunReport:
        return cls(
            instance=instance,
            variables=m.dimension,
            constraints=len(m.constraints),
            status=r.status,
            primal=r.primal,
            dual=r.dual,
            gap=r.gap,
            explored=r.explored,
            remaining=r.remaining,
            time=r.time,
            known=m.primal_bound,
        )

    def table(self) -> str:
        """Aligned header and value row, numbers to 3 decimals."""
        columns = [
            ('Instance', self.instance),
            ('Vars', str(self.variables)),
            ('Cons', str(self.constraints)),
            ('Primal', _number(self.primal)),
            ('Dual', _number(self.dual)),
            ('Gap', _number(self.gap)),
            ('Explored', str(self.explored)),
            ('Remaining', str(self.remaining)),
            ('Time', _number(self.time)),
        ]
        if self.known is not None:
            columns.append(('Known', _number(self.known)))
        widths = [max(len(h), len(v)) for h, v in columns]
        header = '  '.join(h.rjust(w) for (h, _), w in zip(columns, widths))
        row = '  '.join(v.rjust(w) for (_, v), w in zip(columns, widths))
        return f'{colorize(header, BOLD)}\n{row}'

    def kv(self) -> str:
        values: dict[str, Any] = {
            'instance': self.instance,
            'status': self.status.value,
            'variables': self.variables,
            'constraints': self.constraints,
            'primal': self.primal,
            'dual': self.dual,
            'gap': self.gap,
            'explored': self.explored,
            'remaining': self.remaining,
            'time': self.time,
        }
        if self.known is not None:
            values['known'] = self.known
        return '\n'.join(f'{k}={_plain(v)}' for k, v in values.items())


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        print(f'{__appname__}: {message}', file=sys.stderr)
        print(HELP, file=sys.stderr)
        sys.exit(1)


class Setup:
    """Argument parsing, logging configuration and solver options."""

    @staticmethod
    def logging(verbose: int) -> None:
        """
        Configures the logging format and level based on the verbose count.
        """
        logging_format = '[{levelname:^7}] {name:<18}: {message} (line:{lineno})'
        levels = [logging.ERROR, logging.WARNING, logging.INFO, logging.DEBUG]
        level = levels[min(verbose, len(levels) - 1)]
        logging.basicConfig(
            level=level,
            format=logging_format,
            style='{',
            handlers=[logging.StreamHandler()],
        )

    @staticmethod
    def args(argv: Sequence[str] | None = None) -> argparse.Namespace:
        """Parses and returns command-line arguments."""
        parser = ArgumentParser(
            prog=__appname__,
            formatter_class=argparse.RawTextHelpFormatter,
            add_help=False,
        )
        parser.add_argument('command', nargs='?', choices=['solve', 'dump-dd'])
        parser.add_argument('instance', nargs='?')
        parser.add_argument('--gap', type=float)
        parser.add_argument('--time-limit', type=float)
        parser.add_argument('--partitions', type=int)
        parser.add_argument('--width', type=int)
        parser.add_argument('--merge', type=str, choices=['f', 'g'])
        parser.add_argument('--separation', type=str, choices=['subgradient', 'exact'])
        parser.add_argument('--sg-iters', type=int)
        parser.add_argument('--sg-step', type=float)
        parser.add_argument('--cut-rounds', type=int)
        parser.add_argument('--exact-fallback', action='store_const', const=True)
        parser.add_argument('--node-limit', type=int)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--dump-dd', action='store_true')
        parser.add_argument('--constraint', type=int, default=1)
        parser.add_argument('--kv', action='store_true')
        parser.add_argument('--config', type=Path)
        parser.add_argument('--color', type=str, choices=['always', 'never'], default='always')
        parser.add_argument('-V', '--version', action='store_true')
        parser.add_argument('-h', '--help', action='store_true')
        parser.add_argument('-v', '--verbose', action='count', default=0)
        return parser.parse_args(argv)

    @staticmethod
    def config(args: argparse.Namespace) -> SolverConfig:
        """
        Layers the solver options: defaults, then the INI file, then flags.
        A missing default INI file is fine; a missing `--config` file is not.
        """
        cfg = SolverConfig()
        path = args.config or (CONFIG_FILE if CONFIG_FILE.exists() else None)
        if path is not None:
            section = INIFile(path).read().get('solver')
            if section:
                logger.debug(f'solver options from {path}: {section}')
                cfg = cfg.update(section)
        flags = {k: getattr(args, k) for k in SOLVER_FLAGS if getattr(args, k) is not None}
        if flags:
            cfg = cfg.update({k: str(v) for k, v in flags.items()})
        return cfg


def parse_and_exit(args: argparse.Namespace) -> None | int:
    """Handles the flags that end the program before any solving."""
    if args.version:
        version()
        return 0
    if args.help:
        print(HELP)
        return 0
    if not args.command or not args.instance:
        print(HELP)
        return 1
    return None


def read_model(path: str) -> Model:
    f = Path(path)
    logger.debug(f'reading instance={f}')
    return parse(f.read_text(encoding='utf-8'), name=f.stem)


def dump_diagram(m: Model, k: int, cfg: SolverConfig) -> str:
    """Diagram of constraint `k` (0-based) over the root box."""
    if not 0 <= k < len(m.constraints):
        err_msg = f'constraint {k + 1} out of range, the model has {len(m.constraints)}'
        raise ValueError(err_msg)
    c = m.constraints[k]
    box = m.box
    rules = [select_rule(t, box.domains) for t in c.terms]
    partitions = make_partitions(box, cfg.partitions, c.variables)
    d = build(c, partitions, cfg.width, cfg.merge, rules, box.integer, m.dimension)
    name = c.name or str(k + 1)
    return f'# constraint {name}\n{dump(d, m.names)}'


def run_dump(args: argparse.Namespace, cfg: SolverConfig) -> int:
    m = read_model(args.instance)
    print(dump_diagram(m, args.constraint - 1, cfg))
    return 0


def run_solve(args: argparse.Namespace, cfg: SolverConfig) -> int:
    m = read_model(args.instance)
    if args.dump_dd:
        for k, c in enumerate(m.constraints):
            if c.linear() is None:
                print(dump_diagram(m, k, cfg))
    result = solve(m, cfg)
    report = RunReport.new(m.name, m, result)

    status = colorize(result.status.value, BOLD, STATUS_COLORS[result.status])
    print(f'{colorize("status:", GRAY)} {status}')
    print(report.table())
    if result.x is not None:
        width = max(len(n) for n in m.names)
        for name, value in zip(m.names, result.x):
            print(f'  {colorize(name.ljust(width), CYAN)} = {value:.6g}')
    if args.kv:
        print(report.kv())
    return EXIT_CODES[result.status]


def main(argv: Sequence[str] | None = None) -> int:
    args = Setup.args(argv)
    Setup.logging(args.verbose)
    Console.color = args.color == 'always'
    logger.debug(vars(args))

    if (retcode := parse_and_exit(args)) is not None:
        return retcode
    try:
        cfg = Setup.config(args)
        if args.command == 'dump-dd':
            return run_dump(args, cfg)
        return run_solve(args, cfg)
    except ERRORS as exc:
        print(f'{colorize("[err]", BOLD, RED)} {exc}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
