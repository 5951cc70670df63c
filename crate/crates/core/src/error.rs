use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{BuildingId, ProjectState};
use crate::masters::TypeCategory;
use crate::risk::ScaleViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of an error, used by service layers to pick a response status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Validation,
    Conflict,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: ProjectState, to: ProjectState },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("{op} is not allowed in state {state}")]
    WrongState { op: &'static str, state: ProjectState },
    #[error("project is stale and must be recomputed: {0}")]
    StaleProject(String),

    #[error("invalid vulnerability scale: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScale(Vec<ScaleViolation>),
    #[error("expected 11 parameter classes, got {0}")]
    WrongArity(usize),
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("bad band configuration: {0}")]
    BadBandConfig(String),
    #[error("unknown level {0:?}")]
    UnknownLevel(String),

    #[error("a scenario with a/g = {0} already exists")]
    DuplicateAcceleration(String),
    #[error("acceleration must be a finite number > 0, got {0}")]
    InvalidAcceleration(f64),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("{category} code {code:?} already exists")]
    DuplicateCode { category: TypeCategory, code: String },
    #[error("{category} code {code:?} does not exist")]
    UnknownCode { category: TypeCategory, code: String },
    #[error("{category} alias {alias:?} already resolves to {code:?}")]
    AliasConflict { category: TypeCategory, alias: String, code: String },
    #[error("{0} building type values are not reconciled with the masters")]
    UnreconciledTypes(usize),
    #[error("input is not a GeoJSON FeatureCollection: {0}")]
    NotAFeatureCollection(String),
    #[error("feature {0} lacks the key property")]
    MissingKeyProperty(usize),
    #[error("feature {index}: {reason}")]
    InvalidGeometry { index: usize, reason: String },
    #[error("duplicate feature key {0:?}")]
    DuplicateFeatureKey(String),
    #[error("unknown building {0}")]
    UnknownBuilding(BuildingId),
    #[error("survey has {0} of 11 classes")]
    IncompleteSurvey(usize),

    #[error("typology name must not be empty")]
    EmptyName,
    #[error("typology name {0:?} already used")]
    DuplicateName(String),
    #[error("unknown master typology {0:?}")]
    UnknownMaster(String),
    #[error("unknown typology {0:?}")]
    UnknownTypology(String),
    #[error("subtypology {0} was never discovered in this project")]
    UnknownSubtypology(String),
    #[error("subtypology {key} already belongs to typology {typology}")]
    KeyAlreadyAssigned { key: String, typology: String },
    #[error("subtypology {0} is not a member of the typology")]
    KeyNotMember(String),
    #[error("quota {quota} exceeds population {population} of {stratum}")]
    QuotaExceedsPopulation { stratum: String, quota: usize, population: usize },
    #[error("{0} cadastral buildings belong to no typology")]
    UnassignedBuildingsRemain(usize),
    #[error("no building has been surveyed")]
    NothingSurveyed,

    #[error("ring with {0} positions; at least 4 closed positions required")]
    DegenerateRing(usize),
    #[error("no Blocks layer loaded")]
    NoBlocksLayer,
    #[error("no layer available for {0} granularity")]
    MissingLayer(&'static str),

    #[error("{file} has schema_version {version}, newer than supported")]
    SchemaTooNew { file: String, version: u64 },
    #[error("{file} is corrupt at line {line}, column {column}: {message}")]
    CorruptFile { file: String, line: usize, column: usize, message: String },
    #[error("unknown building kind {0:?}")]
    UnknownKind(String),
    #[error("project lock {0} is held by another writer")]
    LockHeld(PathBuf),
    #[error("project {0:?} already exists")]
    ProjectExists(String),
    #[error("unknown project {0:?}")]
    UnknownProject(String),
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Stable machine code: the variant name.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            IllegalTransition { .. } => "IllegalTransition",
            PreconditionFailed(_) => "PreconditionFailed",
            WrongState { .. } => "WrongState",
            StaleProject(_) => "StaleProject",
            InvalidScale(_) => "InvalidScale",
            WrongArity(_) => "WrongArity",
            OutOfRange { .. } => "OutOfRange",
            BadBandConfig(_) => "BadBandConfig",
            UnknownLevel(_) => "UnknownLevel",
            DuplicateAcceleration(_) => "DuplicateAcceleration",
            InvalidAcceleration(_) => "InvalidAcceleration",
            UnknownScenario(_) => "UnknownScenario",
            MissingColumn(_) => "MissingColumn",
            DuplicateCode { .. } => "DuplicateCode",
            UnknownCode { .. } => "UnknownCode",
            AliasConflict { .. } => "AliasConflict",
            UnreconciledTypes(_) => "UnreconciledTypes",
            NotAFeatureCollection(_) => "NotAFeatureCollection",
            MissingKeyProperty(_) => "MissingKeyProperty",
            InvalidGeometry { .. } => "InvalidGeometry",
            DuplicateFeatureKey(_) => "DuplicateFeatureKey",
            UnknownBuilding(_) => "UnknownBuilding",
            IncompleteSurvey(_) => "IncompleteSurvey",
            EmptyName => "EmptyName",
            DuplicateName(_) => "DuplicateName",
            UnknownMaster(_) => "UnknownMaster",
            UnknownTypology(_) => "UnknownTypology",
            UnknownSubtypology(_) => "UnknownSubtypology",
            KeyAlreadyAssigned { .. } => "KeyAlreadyAssigned",
            KeyNotMember(_) => "KeyNotMember",
            QuotaExceedsPopulation { .. } => "QuotaExceedsPopulation",
            UnassignedBuildingsRemain(_) => "UnassignedBuildingsRemain",
            NothingSurveyed => "NothingSurveyed",
            DegenerateRing(_) => "DegenerateRing",
            NoBlocksLayer => "NoBlocksLayer",
            MissingLayer(_) => "MissingLayer",
            SchemaTooNew { .. } => "SchemaTooNew",
            CorruptFile { .. } => "CorruptFile",
            UnknownKind(_) => "UnknownKind",
            LockHeld(_) => "LockHeld",
            ProjectExists(_) => "ProjectExists",
            UnknownProject(_) => "UnknownProject",
            Io { .. } => "IoFailure",
            Invalid(_) => "Invalid",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            UnknownScenario(_) | UnknownBuilding(_) | UnknownMaster(_) | UnknownTypology(_) | UnknownProject(_) => {
                ErrorClass::NotFound
            }
            IllegalTransition { .. }
            | PreconditionFailed(_)
            | WrongState { .. }
            | StaleProject(_)
            | DuplicateAcceleration(_)
            | DuplicateCode { .. }
            | AliasConflict { .. }
            | UnreconciledTypes(_)
            | DuplicateName(_)
            | KeyAlreadyAssigned { .. }
            | UnassignedBuildingsRemain(_)
            | NothingSurveyed
            | NoBlocksLayer
            | MissingLayer(_)
            | LockHeld(_)
            | ProjectExists(_) => ErrorClass::Conflict,
            SchemaTooNew { .. } | CorruptFile { .. } | UnknownKind(_) | Io { .. } => ErrorClass::Internal,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}
