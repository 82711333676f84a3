import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

from controller.experiment_controller import ExperimentController
from controller.lab_controller import LabController
from controller.verification_controller import VerificationController
from model.exceptions import BoundaryContactError, ConfigError, GridSizeError

from services.asymptotics.coefficient_service import CoefficientService
from services.elasticity.np_elasticity_service import NPElasticityService
from services.models.model_builder_service import ModelBuilderService
from services.pipeline.assembly_service import AssemblyService
from services.pipeline.counting_service import CountingService
from services.pipeline.solve_service import SolveService
from services.quantize.quantization_service import QuantizationService
from services.spectra.eigensolver_adapters.lapack_eigensolver_adapter import LapackEigensolverAdapter
from services.spectra.eigensolver_adapters.sturm_eigensolver_adapter import SturmEigensolverAdapter
from services.spectra.spectrum_service import SpectrumService
from services.symbol.symbol_calculus_service import SymbolCalculusService

from utils.config.model_config_adapter import ModelConfigAdapter
from utils.file.adapters.operator_binary_adapter import OperatorBinaryAdapter
from utils.file.adapters.report_adapter import ReportAdapter
from utils.log.log_utils import LogUtils

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def create_lab_controller(max_workers: int = 4, log_level: str | None = None) -> LabController:
    """
    Create and return a fully wired LabController.

    One ThreadPoolExecutor serves both the Monte-Carlo streams and the grid
    levels of an experiment. Neither kind of task submits work to the pool
    itself, so sharing it cannot deadlock.

    Parameters:
        max_workers (int): Worker threads of the shared pool.
        log_level (str | None): Optional level for the lab's loggers.

    Returns:
        LabController: Controller behind every subcommand.
    """
    log_utils = LogUtils(level=log_level)
    pool_executor = ThreadPoolExecutor(max_workers=max_workers)

    symbol_calculus_service = SymbolCalculusService(log_utils=log_utils)
    quantization_service = QuantizationService(log_utils=log_utils)
    coefficient_service = CoefficientService(
        mc_pool_executor=pool_executor,
        log_utils=log_utils
    )
    spectrum_service = SpectrumService(
        eigensolver_adapter=LapackEigensolverAdapter(),
        sturm_adapter=SturmEigensolverAdapter(),
        quantization_service=quantization_service,
        log_utils=log_utils
    )
    np_elasticity_service = NPElasticityService(
        symbol_calculus_service=symbol_calculus_service,
        log_utils=log_utils
    )
    model_builder_service = ModelBuilderService(
        symbol_calculus_service=symbol_calculus_service,
        coefficient_service=coefficient_service,
        log_utils=log_utils
    )
    assembly_service = AssemblyService(
        quantization_service=quantization_service,
        spectrum_service=spectrum_service,
        log_utils=log_utils
    )

    experiment_controller = ExperimentController(
        model_builder_service=model_builder_service,
        assembly_service=assembly_service,
        solve_service=SolveService(spectrum_service=spectrum_service, log_utils=log_utils),
        counting_service=CountingService(spectrum_service=spectrum_service, log_utils=log_utils),
        experiment_pool_executor=pool_executor,
        log_utils=log_utils
    )
    verification_controller = VerificationController(
        coefficient_service=coefficient_service,
        spectrum_service=spectrum_service,
        symbol_calculus_service=symbol_calculus_service,
        np_elasticity_service=np_elasticity_service,
        model_builder_service=model_builder_service,
        experiment_controller=experiment_controller,
        log_utils=log_utils
    )
    return LabController(
        model_builder_service=model_builder_service,
        coefficient_service=coefficient_service,
        spectrum_service=spectrum_service,
        assembly_service=assembly_service,
        np_elasticity_service=np_elasticity_service,
        experiment_controller=experiment_controller,
        verification_controller=verification_controller,
        log_utils=log_utils
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='spectral_lab', description="Counting functions of zero-order and Schrodinger-type operators.")
    parser.add_argument("-w", "--workers", type=int, required=False, default=4, help="Worker threads for grid levels and Monte-Carlo streams. default = 4")
    parser.add_argument("--log_level", type=str, required=False, default=None, help="Level of the lab's loggers (DEBUG, INFO, WARNING). default = INFO")
    subparsers = parser.add_subparsers(dest="command", required=True)

    coeff = subparsers.add_parser("coeff", help="Predicted asymptotic coefficient (C, theta).")
    coeff.add_argument("-m", "--method", type=str, choices=("closed", "radial", "mc"), default="closed", help="closed form, radial quadrature or Monte-Carlo. default = closed")
    coeff.add_argument("-d", "--d", type=int, default=3, help="Dimension when no model file is given (a2 = I, h = 1). default = 3")
    coeff.add_argument("--model", type=str, default=None, help="Model file")
    coeff.add_argument("--samples", type=int, default=None, help="Monte-Carlo samples. default = [mc] samples of the model or 1e6")
    coeff.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed. default = first [mc] seed or 0")
    coeff.add_argument("--printed", action="store_true", help="Closed form with the bare measure and exponent d/2")
    coeff.add_argument("-o", "--out", type=str, default=None, help="JSON output file. default = stdout")

    spectrum = subparsers.add_parser("spectrum", help="Assemble, solve and count one grid level.")
    spectrum.add_argument("--model", type=str, required=True, help="Model file")
    spectrum.add_argument("-L", "--L", type=float, required=True, help="Box half-width")
    spectrum.add_argument("-n", "--n", type=int, required=True, help="Points per axis")
    spectrum.add_argument("-o", "--out", type=str, required=True, help="CSV file of counting samples (t, n, flagged)")
    spectrum.add_argument("--report", type=str, default=None, help="JSON file of the level with its fit")

    fit = subparsers.add_parser("fit", help="Power-law fit of counting samples.")
    fit.add_argument("--samples", type=str, required=True, help="CSV file with columns t, n[, flagged]")
    fit.add_argument("--window", type=str, default=None, help="Fit window 'lo, hi'. default = best decade above the floor")
    fit.add_argument("--floor", type=float, default=None, help="Resolution floor for the automatic window")
    fit.add_argument("-o", "--out", type=str, default=None, help="JSON output file. default = stdout")

    np_parser = subparsers.add_parser("np", help="Neumann-Poincare essential spectrum and accumulation order.")
    np_parser.add_argument("--lambda", dest="lam", type=float, default=None, help="Constant Lame lambda")
    np_parser.add_argument("--mu", type=float, default=None, help="Constant Lame mu")
    np_parser.add_argument("--field", type=str, default=None, help="File with an [np] section")
    np_parser.add_argument("--seed", type=int, default=0, help="Seed of the chart sampling. default = 0")
    np_parser.add_argument("-o", "--out", type=str, default=None, help="JSON output file. default = stdout")

    verify = subparsers.add_parser("verify", help="Run the acceptance suite.")
    verify.add_argument("--criteria", type=str, default=None, help="Comma-separated subset, e.g. 1,5,8. default = all")
    verify.add_argument("--quick", action="store_true", help="Reduced sample counts and grids")
    verify.add_argument("--seed", type=int, default=0, help="Root seed. default = 0")
    verify.add_argument("-o", "--out", type=str, default=None, help="JSON output file")

    export = subparsers.add_parser("export", help="Write an assembled operator in the SPTP binary layout.")
    export.add_argument("--model", type=str, required=True, help="Model file")
    export.add_argument("-L", "--L", type=float, required=True, help="Box half-width")
    export.add_argument("-n", "--n", type=int, required=True, help="Points per axis")
    export.add_argument("-o", "--out", type=str, required=True, help="Binary output file")

    run = subparsers.add_parser("run", help="Run the grid ladder of a model file.")
    run.add_argument("--model", type=str, required=True, help="Model file")
    run.add_argument("--seed", type=int, default=0, help="Seed recorded in the report. default = 0")
    run.add_argument("-o", "--out", type=str, default=None, help="JSON output file. default = stdout")
    return parser


def _emit(report_adapter: ReportAdapter, content: dict, out: str | None) -> None:
    if out:
        report_adapter.write_json(content, out)
    else:
        print(report_adapter.to_json(content))


def _dispatch(args: argparse.Namespace, lab: LabController, logger) -> int:
    config_adapter = ModelConfigAdapter()
    report_adapter = ReportAdapter()

    if args.command == "coeff":
        definition = config_adapter.read(args.model) if args.model else None
        report = lab.coefficient(definition, d=args.d, method=args.method, samples=args.samples, seed=args.seed, printed=args.printed)
        _emit(report_adapter, report.to_dict(), args.out)
    elif args.command == "spectrum":
        level = lab.spectrum(config_adapter.read(args.model), args.L, args.n)
        report_adapter.write_samples(level.samples, args.out)
        if args.report:
            report_adapter.write_json(level.to_dict(), args.report)
        if level.note:
            logger.warning(level.note)
    elif args.command == "fit":
        samples = report_adapter.read_samples(args.samples)
        result = lab.fit(samples, window=config_adapter.parse_window(args.window), resolution_floor=args.floor)
        _emit(report_adapter, result.to_dict(), args.out)
    elif args.command == "np":
        if args.field:
            definition = config_adapter.read(args.field)
            if definition.kappa_field is None:
                raise ConfigError(f'{args.field} has no [np] section')
            result = lab.np_field(definition.kappa_field, seed=args.seed)
        elif args.lam is not None and args.mu is not None:
            result = lab.np_constant(args.lam, args.mu)
        else:
            raise ConfigError('np needs --lambda and --mu, or --field')
        _emit(report_adapter, result, args.out)
    elif args.command == "verify":
        criteria = [int(c) for c in args.criteria.split(',') if c.strip()] if args.criteria else None
        report = lab.verify(criteria=criteria, quick=args.quick, seed=args.seed)
        print(report.to_table().to_string(index=False))
        if args.out:
            report_adapter.write_json(report.to_dict(), args.out)
        return EXIT_OK if report.passed else EXIT_FAILURE
    elif args.command == "export":
        operator = lab.export(config_adapter.read(args.model), args.L, args.n)
        binary_adapter = OperatorBinaryAdapter()
        written = binary_adapter.write(operator, args.out)
        check = binary_adapter.read(args.out)
        logger.info(f'Wrote {written} bytes to {args.out}: size {check.size}, storage {check.storage}, bandwidth {check.bandwidth}')
    elif args.command == "run":
        report = lab.run(config_adapter.read(args.model), seeds=(args.seed,))
        _emit(report_adapter, report.to_dict(include_runtime=False), args.out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logger = LogUtils().get_logger(__name__)
    args = build_parser().parse_args(argv)

    for name, value in sorted(vars(args).items()):
        logger.info(f'{name} = {value}')

    lab = create_lab_controller(max_workers=args.workers, log_level=args.log_level)
    try:
        return _dispatch(args, lab, logger)
    except (ConfigError, GridSizeError, BoundaryContactError, ValueError) as e:
        logger.error(f'{args.command}: {e}')
        return EXIT_USAGE
    except (RuntimeError, OSError) as e:
        logger.error(f'{args.command} failed: {e}')
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
