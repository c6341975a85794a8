from .fit import (
    INDIVIDUAL_THRESHOLD,
    POPULATION_THRESHOLD,
    EditLogRecord,
    FitError,
    IndividualModel,
    PopulationModel,
    aggregate_population,
    coefficient_distance,
    fit_individual,
    fit_population,
    load_model,
    load_model_file,
    serialize_model,
    write_model_file,
)
from .table import (
    TYPE_IDS,
    OperationVariant,
    ParameterTable,
    ParamSpec,
    StepSpec,
    TableError,
    TamperingTypeSpec,
    VariantGroup,
    default_table,
    default_table_text,
    load_parameter_table,
    load_parameter_table_file,
    serialize_table,
    validate_table,
)
