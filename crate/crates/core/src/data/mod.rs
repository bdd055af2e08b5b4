//! Site records, CSV ingestion, descriptive checks and the synthetic generator.

mod descriptives;
mod generator;
mod records;

pub use descriptives::{
    published_descriptives, validate_descriptives, DescriptiveReport, ReferenceStat, VariableSummary,
};
pub use generator::{
    synthesize, CategoricalShares, CountMarginal, CovariateMarginals, GeneratorConfig, Heterogeneity, PositiveMarginal,
    SeverityShares, Synthetic, TermTruth, TruthRecord,
};
pub use records::{
    load, read_records, save, write_records, Area, CategoricalVar, ContinuousVar, Cover, Curve, IntType, Lighting,
    MarkedXwalk, MedianType, Proximity, RowError, Severity, Sidewalk, SiteRecord, StopDesign, Variable, SCHEMA_COLUMNS,
};

#[cfg(test)]
pub(crate) use records::example_record;
