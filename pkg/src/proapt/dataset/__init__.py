from proapt.dataset.encoding import (
    EncodingError,
    FeatureLayout,
    LabelVocabulary,
    NormalizationStats,
    encode_record,
    encode_records,
    zscore_apply,
    zscore_fit,
)
from proapt.dataset.folds import FoldAssignment, stratified_kfold
from proapt.dataset.oversample import (
    EncodedSet,
    SmoteSegments,
    random_oversample,
    smote,
    sort_by_time,
)
from proapt.dataset.records import (
    FlowRecord,
    RowWarning,
    Schema,
    SchemaError,
    clean_labels,
    derive_next_step_labels,
    load_flows,
    load_schema,
    write_flows_csv,
)
from proapt.dataset.store import PreprocessedDataset, preprocess_records
from proapt.dataset.synthetic import (
    APT_STAGES,
    SyntheticConfig,
    chain_matrix,
    generate_synthetic_apt,
    synthetic_schema,
)
