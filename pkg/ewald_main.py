#ewald_main.py
#!/usr/bin/env python3
"""
ewald_main
Spectral Ewald Stokes potentials
Command-line front end for the periodic stokeslet, stresslet and rotlet sums

Features:
- Random particle files (uniform or clustered) with a fixed seed
- Full potential evaluation with automated parameter selection
- Validation of the Fourier-space part against the analytical oracles
- Error sweeps over k_inf, P, r_c and the tolerance, for plotting
- Scaling benchmark at a fixed number of neighbours within r_c
- Parameter reports as text or JSON lines
"""

import os
import sys
import csv
import json
import math
import re
import time
import logging
import argparse
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

# Load environment variables
from dotenv import load_dotenv
load_dotenv(override=True)

from domain import (ConfigurationError, DomainError, EwaldError, InfeasibleToleranceError,
                    KernelKind, ParticleFileError, Periodicity, PrimaryCell, SourceSystem,
                    TargetSet, source_quantity_Q)
from estimates import (NRC_TABLE, XI_TABLE, EstimateReport, EwaldParams, ToleranceSpec,
                       build_params, fourier_trunc_error, potential_rms, rc_from_nrc,
                       realspace_trunc_error, select_parameters, solve_kinf, solve_rc,
                       window_error, xi_for_cutoff)
from fourier_engine import FourierSolver
from realspace import full_potential, potential_parts, realspace_potential
from reference import (direct_sum_0p, random_system, reference_fourier_part, rel_rms_error,
                       rms_error)

COMMANDS = ("generate", "compute", "validate", "sweep", "bench", "params", "help")
SWEEP_AXES = ("kinf", "P", "rc", "tol")
DEFAULT_TOLERANCE = 1e-8

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4

# ===== CONFIGURATION CLASSES =====


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name, str(default))
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got '{value}'")


@dataclass
class Config:
    """Process-wide defaults loaded from the environment (.env supported)"""

    log_file: str = "ewald.log"
    log_level: str = "INFO"
    output_dir: str = "."
    default_fm: int = 4
    threads: int = 1
    max_oracle_n: int = 5000
    default_seed: int = 0
    precompute_0p: bool = True

    @classmethod
    def from_env(cls):
        """Create configuration from environment variables"""
        return cls(
            log_file=os.getenv("EWALD_LOG_FILE", "ewald.log"),
            log_level=os.getenv("EWALD_LOG_LEVEL", "INFO").upper(),
            output_dir=os.getenv("EWALD_OUTPUT_DIR", "."),
            default_fm=_env_int("EWALD_DEFAULT_FM", 4),
            threads=_env_int("EWALD_THREADS", 1),
            max_oracle_n=_env_int("EWALD_MAX_ORACLE_N", 5000),
            default_seed=_env_int("EWALD_DEFAULT_SEED", 0),
            precompute_0p=os.getenv("EWALD_PRECOMPUTE_0P", "true").lower() == "true",
        )

    def validate_config(self):
        """Validate configuration with detailed error reporting"""
        errors = []
        warnings = []

        if self.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"EWALD_LOG_LEVEL '{self.log_level}' is not a logging level")
        if self.default_fm < 1:
            errors.append("EWALD_DEFAULT_FM must be at least 1")
        if self.threads < 1:
            errors.append("EWALD_THREADS must be at least 1")
        if self.max_oracle_n < 1:
            errors.append("EWALD_MAX_ORACLE_N must be positive")

        if self.max_oracle_n > 5000:
            warnings.append(f"EWALD_MAX_ORACLE_N={self.max_oracle_n} - oracle runs will be very slow")
        if not Path(self.output_dir).is_dir():
            warnings.append(f"EWALD_OUTPUT_DIR '{self.output_dir}' does not exist - it will be created")

        if errors:
            error_msg = f"Configuration errors: {', '.join(errors)}"
            if warnings:
                error_msg += f"\nWarnings: {', '.join(warnings)}"
            raise ValueError(error_msg)

        if warnings:
            print("⚠️  Configuration warnings:")
            for warning in warnings:
                print(f"   • {warning}")


@dataclass
class RunConfig:
    """One command invocation: parsed flags on top of Config defaults"""

    command: str
    kernel: str = "stokeslet"
    periodicity: int = 3
    cell: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    tol_abs: Optional[float] = None
    tol_rel: Optional[float] = None
    xi: Optional[float] = None
    nrc: Optional[float] = None
    window: str = "pkb"
    f_M: int = 4
    seed: int = 0
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    pollution_adjust: bool = True
    threads: int = 1
    n: int = 100
    Q: float = 1.0
    clustered: bool = False
    axis: str = "kinf"
    steps: int = 5
    jsonl: bool = False
    precompute_0p: bool = True

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: Config) -> "RunConfig":
        cell = (1.0, 1.0, 1.0)
        if getattr(args, "cell", None):
            try:
                cell = tuple(float(v) for v in args.cell.split(","))
            except ValueError:
                raise ConfigurationError(f"--cell must be Lx,Ly,Lz or a single L, got '{args.cell}'")
        if len(cell) == 1:
            cell = cell * 3
        return cls(
            command=args.command,
            kernel=getattr(args, "kernel", "stokeslet"),
            periodicity=getattr(args, "periodicity", 3),
            cell=cell,
            tol_abs=getattr(args, "tol_abs", None),
            tol_rel=getattr(args, "tol_rel", None),
            xi=getattr(args, "xi", None),
            nrc=getattr(args, "nrc", None),
            window=getattr(args, "window", "pkb"),
            f_M=getattr(args, "fm", None) or config.default_fm,
            seed=config.default_seed if getattr(args, "seed", None) is None else args.seed,
            input_path=getattr(args, "input_path", None),
            output_path=getattr(args, "output_path", None),
            pollution_adjust=not getattr(args, "no_pollution_adjust", False),
            threads=getattr(args, "threads", None) or config.threads,
            n=getattr(args, "n", 100),
            Q=getattr(args, "Q", 1.0),
            clustered=getattr(args, "clustered", False),
            axis=getattr(args, "axis", "kinf"),
            steps=getattr(args, "steps", 5),
            jsonl=getattr(args, "jsonl", False),
            precompute_0p=config.precompute_0p,
        )

    def validate(self):
        if self.xi is not None and self.nrc is not None:
            raise ConfigurationError("--xi and --nrc are mutually exclusive")
        if self.tol_abs is not None and self.tol_rel is not None:
            raise ConfigurationError("--tol-abs and --tol-rel are mutually exclusive")
        if self.periodicity not in (0, 1, 2, 3):
            raise ConfigurationError(f"--periodicity must be 0, 1, 2 or 3, got {self.periodicity}")
        if self.window not in ("pkb", "kb", "tg"):
            raise ConfigurationError(f"--window must be pkb, kb or tg, got {self.window}")
        if self.f_M < 1:
            raise ConfigurationError(f"--fm must be at least 1, got {self.f_M}")
        if len(self.cell) != 3 or any(not v > 0 for v in self.cell):
            raise ConfigurationError(f"--cell needs three positive side lengths, got {self.cell}")
        if self.axis not in SWEEP_AXES:
            raise ConfigurationError(f"Sweep axis must be one of {', '.join(SWEEP_AXES)}")
        if self.n < 1 or self.steps < 1 or self.threads < 1:
            raise ConfigurationError("--n, --steps and --threads must be positive")
        if self.xi is not None and not self.xi > 0:
            raise ConfigurationError(f"--xi must be positive, got {self.xi}")
        KernelKind.parse(self.kernel)

    @property
    def primary_cell(self) -> PrimaryCell:
        return PrimaryCell(*self.cell)

    @property
    def tolerance(self) -> ToleranceSpec:
        if self.tol_abs is None and self.tol_rel is None:
            return ToleranceSpec(absolute=DEFAULT_TOLERANCE)
        return ToleranceSpec(self.tol_abs, self.tol_rel)


def _setup_logging(config: Config):
    """Setup logging to file and stdout"""
    logging.basicConfig(
        level=getattr(logging, config.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(config.log_file),
            logging.StreamHandler(sys.stdout)
        ]
    )

# ===== PARTICLE FILES =====

_HEADER = re.compile(r"^#\s*kernel=(\S+)\s+D=(\S+)\s+L=(\S+)\s+(\S+)\s+(\S+)\s+N=(\S+)\s*$")


def write_particle_file(path, system: SourceSystem):
    L = system.cell.lengths
    columns = np.hstack([system.positions, system.strengths]
                        + ([system.normals] if system.normals is not None else []))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# kernel={system.kind.value} D={system.d} "
                     f"L={L[0]:.17g} {L[1]:.17g} {L[2]:.17g} N={system.N}\n")
        for row in columns:
            handle.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_particle_file(path) -> SourceSystem:
    """Parse a particle file; every error names the offending line"""
    header = None
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as e:
        raise ParticleFileError(f"Cannot read particle file {path}: {e}")

    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _HEADER.match(line)
            if match and header is None:
                try:
                    kind = KernelKind.parse(match.group(1))
                    d = int(match.group(2))
                    cell = PrimaryCell(*(float(match.group(i)) for i in (3, 4, 5)))
                    n = int(match.group(6))
                    periodicity = Periodicity(d)
                except (ValueError, EwaldError) as e:
                    raise ParticleFileError(f"Bad header: {e}", number)
                header = (kind, periodicity, cell, n, number)
            continue
        if header is None:
            raise ParticleFileError("Data before the '# kernel=... D=... L=... N=...' header", number)
        expected = 9 if header[0] is KernelKind.STRESSLET else 6
        fields = line.split()
        if len(fields) != expected:
            raise ParticleFileError(f"Expected {expected} columns for {header[0].value}, "
                                    f"got {len(fields)}", number)
        try:
            values = [float(v) for v in fields]
        except ValueError:
            raise ParticleFileError(f"Non-numeric value in '{line}'", number)
        if not all(math.isfinite(v) for v in values):
            raise ParticleFileError("Non-finite value", number)
        rows.append(values)

    if header is None:
        raise ParticleFileError("Missing '# kernel=... D=... L=... N=...' header")
    kind, periodicity, cell, n, header_line = header
    if len(rows) != n:
        raise ParticleFileError(f"Header announces N={n} but {len(rows)} particles were read",
                                header_line)
    data = np.array(rows, dtype=float).reshape(-1, 9 if kind is KernelKind.STRESSLET else 6)
    normals = data[:, 6:9] if kind is KernelKind.STRESSLET else None
    try:
        return SourceSystem(kind, cell, data[:, 0:3], data[:, 3:6], normals, periodicity)
    except DomainError as e:
        raise ParticleFileError(str(e))

# ===== UTILITY CLASSES =====


class PotentialCSVExporter:
    """Writes potentials and sweep tables as CSV with '#' parameter header lines"""

    def __init__(self, csv_path: str):
        self.csv_path = csv_path
        self.logger = logging.getLogger(f"{__name__}.PotentialCSVExporter")

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, (float, np.floating)):
            return f"{float(value):.17g}"
        return str(value)

    def export_rows(self, fieldnames: Sequence[str], rows: Iterable[Sequence],
                    header: Optional[Dict] = None) -> bool:
        """Write rows below '# key=value' header lines; floats keep 17 significant digits"""
        try:
            csv_path = Path(self.csv_path)
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            count = 0
            with open(csv_path, 'w', newline='', encoding='utf-8') as csvfile:
                for key, value in (header or {}).items():
                    csvfile.write(f"# {key}={value}\n")
                writer = csv.writer(csvfile)
                writer.writerow(fieldnames)
                for row in rows:
                    writer.writerow([self._format(v) for v in row])
                    count += 1
            self.logger.info(f"Wrote {count} rows to {csv_path}")
            return True
        except OSError as e:
            self.logger.error(f"Error exporting to CSV: {e}")
            return False

    def export_potential(self, positions: np.ndarray, u: np.ndarray,
                         header: Optional[Dict] = None) -> bool:
        rows = ([i, *positions[i], *u[i]] for i in range(positions.shape[0]))
        return self.export_rows(["index", "x", "y", "z", "u1", "u2", "u3"], rows, header)


def read_potential_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Positions and potentials back from an exported CSV"""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.reader(lines)
    next(reader)
    data = np.array([[float(v) for v in row[1:]] for row in reader], dtype=float).reshape(-1, 6)
    return data[:, :3], data[:, 3:]

# ===== MAIN APPLICATION CLASS =====


class EwaldApplication:
    """Runs one command on top of the library modules"""

    def __init__(self, config: Config):
        self.config = config
        self.workers = config.threads
        self.logger = logging.getLogger(f"{__name__}.EwaldApplication")

    def _output(self, run: RunConfig, default_name: str) -> str:
        if run.output_path:
            return run.output_path
        return str(Path(self.config.output_dir) / default_name)

    def _resolve_xi(self, run: RunConfig, kind: KernelKind, N: int, cell: PrimaryCell,
                    Q: float) -> float:
        L = cell.volume ** (1.0 / 3.0)
        if run.xi is not None:
            return run.xi
        if run.nrc is None:
            xi = 10.0 / L
            self.logger.info(f"No --xi or --nrc given, using xi={xi:.6g}")
            return xi
        r_c = rc_from_nrc(run.nrc, N, cell.volume)
        xi = 10.0 / L
        # a relative tolerance depends on U(xi), so iterate once more
        for _ in range(2 if run.tol_rel is not None else 1):
            tau = run.tolerance.absolute_for(potential_rms(kind, L, Q, xi))
            xi = xi_for_cutoff(kind, r_c, tau, L, Q).value
        self.logger.info(f"N_rc={run.nrc} -> r_c={r_c:.6g} -> xi={xi:.6g}")
        return xi

    def select(self, run: RunConfig, system: SourceSystem, strict: bool = True,
               tau: Optional[float] = None) -> Tuple[EwaldParams, EstimateReport]:
        Q = source_quantity_Q(system)
        if Q == 0:
            self.logger.warning("All strengths are zero; selecting parameters for Q=1")
            Q = 1.0
        cell = system.cell
        xi = self._resolve_xi(run, system.kind, system.N, cell, Q)
        if tau is None:
            tau = run.tolerance.absolute_for(potential_rms(system.kind, cell.volume ** (1.0 / 3.0),
                                                           Q, xi))
        return select_parameters(system.kind, system.d, cell, Q, xi, tau, f_M=run.f_M,
                                 window=run.window, pollution=run.pollution_adjust,
                                 precompute_0p=run.precompute_0p, strict=strict)

    def _load_or_generate(self, run: RunConfig) -> SourceSystem:
        if run.input_path:
            return read_particle_file(run.input_path)
        return random_system(run.kernel, run.n, run.primary_cell, run.periodicity, run.Q,
                             run.seed, run.clustered)

    # ----- commands -----

    def cmd_generate(self, run: RunConfig) -> int:
        system = random_system(run.kernel, run.n, run.primary_cell, run.periodicity, run.Q,
                               run.seed, run.clustered)
        path = self._output(run, "particles.txt")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_particle_file(path, system)
        layout = "clustered" if run.clustered else "uniform"
        print(f"✅ Wrote {system.N} {layout} {system.kind.value} particles (D={system.d}) to {path}")
        return EXIT_OK

    def cmd_compute(self, run: RunConfig) -> int:
        if not run.input_path:
            raise ConfigurationError("compute needs --in <particle file>")
        system = read_particle_file(run.input_path)
        params, report = self.select(run, system)
        targets = TargetSet.from_sources(system)
        started = time.perf_counter()
        u = full_potential(system, targets, params, workers=self.workers)
        elapsed = time.perf_counter() - started
        header = {"kernel": system.kind.value, "D": system.d, "N": system.N}
        header.update({key: value for key, value in asdict(params).items() if key not in header})
        path = self._output(run, "potential.csv")
        if not PotentialCSVExporter(path).export_potential(system.positions, u, header):
            return EXIT_FAILURE
        print(f"✅ Potential for {system.N} targets written to {path} ({elapsed:.2f}s)")
        return EXIT_OK

    def _measured(self, system: SourceSystem, targets: TargetSet, params: EwaldParams,
                  solver: Optional[FourierSolver] = None) -> np.ndarray:
        """Fourier-space part (D >= 1) or the full potential (D = 0)"""
        if system.d == 0:
            return full_potential(system, targets, params, solver, self.workers)
        parts = potential_parts(system, targets, params, solver, self.workers)
        return parts.fourier + parts.zero_mode

    def _reference(self, system: SourceSystem, targets: TargetSet, xi: float,
                   tau: float, Q: float) -> np.ndarray:
        if system.N > self.config.max_oracle_n:
            raise ConfigurationError(f"Oracle limited to N <= {self.config.max_oracle_n}, "
                                     f"got N={system.N}")
        if system.d == 0:
            return direct_sum_0p(system, targets)
        L = system.cell.volume ** (1.0 / 3.0)
        k_max = solve_kinf(system.kind, xi, tau, L, Q).value
        k_max = max(k_max, 2.0 * math.pi / float(system.cell.lengths.min()))
        self.logger.info(f"Reference Fourier sum truncated at k_max={k_max:.6g}")
        return reference_fourier_part(system, targets, xi, k_max)

    def cmd_validate(self, run: RunConfig) -> int:
        system = self._load_or_generate(run)
        params, report = self.select(run, system)
        if report.saturated:
            print("⚠️  Tolerance is at the round-off floor; the error will saturate")
        targets = TargetSet.from_sources(system)
        reference = self._reference(system, targets, params.xi, report.tau / 100.0, report.Q)
        u = self._measured(system, targets, params)
        error = rms_error(u, reference)
        relative = rel_rms_error(u, reference)
        part = "full potential" if system.d == 0 else "Fourier part"

        print(f"\n📊 Validation: {system.kind.value}, D={system.d}, N={system.N}")
        print("=" * 50)
        print(f"   • Tolerance:          {report.tau:.3e}")
        print(f"   • rms error ({part}): {error:.3e}")
        print(f"   • relative rms error:  {relative:.3e}")
        if error > 10.0 * report.tau:
            print("❌ Error exceeds 10 x tolerance")
            return EXIT_VALIDATION
        print("✅ Within one order of magnitude of the tolerance")
        return EXIT_OK

    def _sweep_points(self, run: RunConfig, system: SourceSystem, params: EwaldParams,
                      report: EstimateReport) -> List[Tuple[float, float, float]]:
        kind, d, cell = system.kind, system.d, system.cell
        L, Q, U, xi = report.L, report.Q, report.U, params.xi
        targets = TargetSet.from_sources(system)
        rows = []

        if run.axis == "rc":
            r_ref = solve_rc(kind, xi, 1e-3 * report.tau, L, Q).value
            reference = realspace_potential(system, targets, xi, r_ref, workers=self.workers)
            for r_c in np.linspace(0.1, 0.5, 2 * run.steps + 1) * L:
                u = realspace_potential(system, targets, xi, r_c, workers=self.workers)
                rows.append((r_c, rms_error(u, reference),
                             realspace_trunc_error(kind, xi, r_c, L, Q)))
            return rows

        reference = self._reference(system, targets, xi, 1e-3 * report.tau, Q)
        r_c = max(params.r_c, solve_rc(kind, xi, 1e-3 * report.tau, L, Q).value)

        if run.axis == "tol":
            for tau in np.logspace(-2, -12, 2 * run.steps + 1):
                sweep_params, _ = self.select(run, system, strict=False, tau=float(tau))
                u = self._measured(system, targets, sweep_params)
                rows.append((tau, rms_error(u, reference), tau))
            return rows

        L1 = float(cell.lengths[0])
        if run.axis == "kinf":
            P = 24
            M_fine = params.grid_shape[0]
            for M in np.unique(np.linspace(4, M_fine, 2 * run.steps + 1).astype(int) // 2 * 2):
                h = L1 / M
                sweep_params, _, _ = build_params(kind, d, cell, xi, r_c, h, P, report.tau, U,
                                                  params.f_M, params.window, params.precompute_0p)
                u = self._measured(system, targets, sweep_params)
                rows.append((math.pi / h, rms_error(u, reference),
                             fourier_trunc_error(kind, xi, math.pi / h, L, Q)))
            return rows

        # window size sweep on a grid fine enough for the truncation error to vanish
        k_fine = solve_kinf(kind, xi, 1e-3 * report.tau, L, Q).value
        h = params.h
        while math.pi / h < k_fine:
            h /= 2.0
        for P in range(4, 2 * run.steps + 6, 2):
            sweep_params, _, _ = build_params(kind, d, cell, xi, r_c, h, P, report.tau, U,
                                              params.f_M, params.window, params.precompute_0p)
            u = self._measured(system, targets, sweep_params)
            rows.append((P, rms_error(u, reference), window_error(P, U)))
        return rows

    def cmd_sweep(self, run: RunConfig) -> int:
        system = self._load_or_generate(run)
        params, report = self.select(run, system, strict=False)
        rows = self._sweep_points(run, system, params, report)
        header = {"kernel": system.kind.value, "D": system.d, "N": system.N, "xi": params.xi,
                  "axis": run.axis}
        path = self._output(run, f"sweep_{run.axis}.csv")
        if not PotentialCSVExporter(path).export_rows(
                [run.axis, "measured_error", "estimated_error"], rows, header):
            return EXIT_FAILURE
        print(f"✅ {len(rows)} sweep points over {run.axis} written to {path}")
        return EXIT_OK

    def cmd_bench(self, run: RunConfig) -> int:
        kind = KernelKind.parse(run.kernel)
        cell = run.primary_cell
        d = run.periodicity
        distribution = "clustered" if run.clustered else "uniform"
        nrc = run.nrc if run.nrc is not None else NRC_TABLE[(kind, distribution)][d]
        xi = run.xi if run.xi is not None else XI_TABLE[(kind, distribution)][d]
        L = cell.volume ** (1.0 / 3.0)
        tau = run.tolerance.absolute_for(potential_rms(kind, L, run.Q, xi))
        self.logger.info(f"Bench {kind.value} D={d} {distribution}: xi={xi}, N_rc={nrc}, "
                         f"tau={tau:.3g}")
        rows = []
        for j in range(run.steps):
            N = run.n * 2 ** j
            system = random_system(kind, N, cell, d, run.Q, run.seed + j, run.clustered)
            r_c = rc_from_nrc(nrc, N, cell.volume)
            params, _ = select_parameters(kind, d, cell, run.Q, xi, tau, f_M=run.f_M,
                                          window=run.window, pollution=run.pollution_adjust,
                                          precompute_0p=run.precompute_0p)
            # fixed neighbour count: the cut-off follows N, not the tolerance
            params = replace(params, r_c=r_c)
            solver = FourierSolver(kind, cell, d, params)
            targets = TargetSet.from_sources(system)
            started = time.perf_counter()
            full_potential(system, targets, params, solver, self.workers)
            wall = time.perf_counter() - started
            self.logger.info(f"Bench N={N}: {wall:.3f}s (setup {solver.setup_seconds:.3f}s excluded)")
            rows.append((N, wall, wall / N, solver.setup_seconds))
        header = {"kernel": kind.value, "D": d, "distribution": distribution, "N_rc": nrc,
                  "xi": xi, "tau": tau}
        path = self._output(run, "bench.csv")
        if not PotentialCSVExporter(path).export_rows(
                ["N", "wall_time", "time_per_N", "setup_time"], rows, header):
            return EXIT_FAILURE
        print(f"✅ Benchmark with {len(rows)} sizes written to {path}")
        return EXIT_OK

    def cmd_params(self, run: RunConfig) -> int:
        system = self._load_or_generate(run)
        params, report = self.select(run, system, strict=False)
        values = report.to_dict()
        if run.jsonl:
            print(json.dumps(values))
            return EXIT_OK
        print(f"\n📊 Parameters for {report.kind}, D={report.d}")
        print("=" * 50)
        for key, value in values.items():
            print(f"   • {key}: {value}")
        if not report.all_feasible:
            print("⚠️  Tolerance cannot be met by every estimate")
        return EXIT_OK

    def dispatch(self, run: RunConfig) -> int:
        command = run.command
        self.workers = run.threads
        if command == "generate":
            return self.cmd_generate(run)
        elif command == "compute":
            return self.cmd_compute(run)
        elif command == "validate":
            return self.cmd_validate(run)
        elif command == "sweep":
            return self.cmd_sweep(run)
        elif command == "bench":
            return self.cmd_bench(run)
        elif command == "params":
            return self.cmd_params(run)
        raise ConfigurationError(f"Unknown command: {command}")

# ===== COMMAND LINE =====


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--kernel", default="stokeslet", choices=[k.value for k in KernelKind])
    parser.add_argument("--periodicity", "-D", type=int, default=3)
    parser.add_argument("--cell", help="Lx,Ly,Lz (or a single L)")
    tol = parser.add_mutually_exclusive_group()
    tol.add_argument("--tol-abs", type=float)
    tol.add_argument("--tol-rel", type=float)
    split = parser.add_mutually_exclusive_group()
    split.add_argument("--xi", type=float)
    split.add_argument("--nrc", type=float)
    parser.add_argument("--window", default="pkb", choices=["pkb", "kb", "tg"])
    parser.add_argument("--fm", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--in", dest="input_path")
    parser.add_argument("--out", dest="output_path")
    parser.add_argument("--no-pollution-adjust", action="store_true")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--Q", type=float, default=1.0)
    parser.add_argument("--clustered", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ewald_main.py",
                                     description="Spectral Ewald stokeslet, stresslet and rotlet sums")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS[:-1]:
        command = sub.add_parser(name)
        _add_common(command)
        if name == "sweep":
            command.add_argument("--axis", default="kinf", choices=SWEEP_AXES)
        if name in ("sweep", "bench"):
            command.add_argument("--steps", type=int, default=5)
        if name == "params":
            command.add_argument("--jsonl", action="store_true")
    return parser


def print_help():
    print("\n🌊 Spectral Ewald for Stokes potentials")
    print("=" * 40)
    print("\nAvailable commands:")
    print("  generate   - Write a seeded random particle file")
    print("  compute    - Evaluate the full potential at every particle")
    print("  validate   - Compare against the analytical/direct oracle")
    print("  sweep      - Measured vs estimated error over kinf|P|rc|tol")
    print("  bench      - Timings at fixed N_rc for doubling N")
    print("  params     - Print the selected parameters (--jsonl for JSON)")
    print("  help       - Show this help message")
    print("\nExamples:")
    print("  python ewald_main.py generate --kernel stresslet -D 2 --n 1000 --out p.txt")
    print("  python ewald_main.py compute --in p.txt --tol-abs 1e-8 --xi 10 --out u.csv")
    print("  python ewald_main.py params --kernel rotlet -D 1 --n 1000 --jsonl")


def main(argv: Optional[Sequence[str]] = None, config: Optional[Config] = None) -> int:
    """Parse arguments, run one command and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0].lower() in ("help", "-h", "--help"):
        print_help()
        return EXIT_OK

    try:
        config = config or Config.from_env()
        config.validate_config()
    except ValueError as e:
        print(f"❌ Configuration error: {e}")
        print("\nPlease check your .env file and the EWALD_* variables.")
        return EXIT_USAGE
    _setup_logging(config)
    logger = logging.getLogger(__name__)

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        run = RunConfig.from_args(args, config)
        run.validate()
        app = EwaldApplication(config)
        with sp_fft.set_workers(run.threads):
            return app.dispatch(run)
    except ParticleFileError as e:
        print(f"❌ Particle file error: {e}")
        return EXIT_USAGE
    except InfeasibleToleranceError as e:
        print(f"❌ Infeasible tolerance: {e}")
        return EXIT_INFEASIBLE
    except (ConfigurationError, DomainError) as e:
        print(f"❌ {e}")
        return EXIT_USAGE
    except Exception as e:
        print(f"\n❌ Unexpected error: {e}")
        logger.error(f"Unexpected error in {argv[0]}: {e}", exc_info=True)
        return EXIT_FAILURE

# ===== APPLICATION ENTRY POINT =====

if __name__ == "__main__":
    try:
        exit_code = main()
        sys.exit(exit_code)
    except KeyboardInterrupt:
        print("\n⚠️  Interrupted by user")
        sys.exit(130)  # Standard exit code for SIGINT
