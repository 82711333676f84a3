from concurrent.futures import ThreadPoolExecutor

import pytest

from controller.experiment_controller import ExperimentController
from controller.verification_controller import VerificationController
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
from spectral_lab import create_lab_controller
from utils.log.log_utils import LogUtils


@pytest.fixture
def log_utils():
    return LogUtils()


@pytest.fixture
def pool_executor():
    executor = ThreadPoolExecutor(max_workers=4)
    yield executor
    executor.shutdown(wait=True)


@pytest.fixture
def symbol_calculus_service(log_utils):
    return SymbolCalculusService(log_utils=log_utils)


@pytest.fixture
def quantization_service(log_utils):
    return QuantizationService(log_utils=log_utils)


@pytest.fixture
def coefficient_service(pool_executor, log_utils):
    return CoefficientService(mc_pool_executor=pool_executor, log_utils=log_utils)


@pytest.fixture
def spectrum_service(quantization_service, log_utils):
    return SpectrumService(
        eigensolver_adapter=LapackEigensolverAdapter(),
        sturm_adapter=SturmEigensolverAdapter(),
        quantization_service=quantization_service,
        log_utils=log_utils
    )


@pytest.fixture
def np_elasticity_service(symbol_calculus_service, log_utils):
    return NPElasticityService(symbol_calculus_service=symbol_calculus_service, log_utils=log_utils)


@pytest.fixture
def model_builder_service(symbol_calculus_service, coefficient_service, log_utils):
    return ModelBuilderService(
        symbol_calculus_service=symbol_calculus_service,
        coefficient_service=coefficient_service,
        log_utils=log_utils
    )


@pytest.fixture
def assembly_service(quantization_service, spectrum_service, log_utils):
    return AssemblyService(quantization_service=quantization_service, spectrum_service=spectrum_service, log_utils=log_utils)


@pytest.fixture
def experiment_controller(model_builder_service, assembly_service, spectrum_service, pool_executor, log_utils):
    return ExperimentController(
        model_builder_service=model_builder_service,
        assembly_service=assembly_service,
        solve_service=SolveService(spectrum_service=spectrum_service, log_utils=log_utils),
        counting_service=CountingService(spectrum_service=spectrum_service, log_utils=log_utils),
        experiment_pool_executor=pool_executor,
        log_utils=log_utils
    )


@pytest.fixture
def verification_controller(
    coefficient_service,
    spectrum_service,
    symbol_calculus_service,
    np_elasticity_service,
    model_builder_service,
    experiment_controller,
    log_utils
):
    return VerificationController(
        coefficient_service=coefficient_service,
        spectrum_service=spectrum_service,
        symbol_calculus_service=symbol_calculus_service,
        np_elasticity_service=np_elasticity_service,
        model_builder_service=model_builder_service,
        experiment_controller=experiment_controller,
        log_utils=log_utils
    )


@pytest.fixture
def lab():
    return create_lab_controller(max_workers=2)
