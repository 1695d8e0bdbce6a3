//! The mesh manifest: which object types a mesh indexes, the minimum metadata
//! required for each, what a platform must attest to before joining, and the
//! formality knobs that shape how governed the mesh is.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identifiers::is_valid_namespace;
use crate::node::AccessTier;

pub const DEFAULT_DMM_LICENSE: &str = "public-domain-dedication";
pub const DEFAULT_USAGE_NOTICE: &str =
    "This hub records which data you access and returns usage statistics to the platforms that host it.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataObjectType {
    Dataset,
    Study,
    ClinicalTrial,
    ParticipantClinical,
    ParticipantOmics,
    ParticipantImaging,
    SequenceFile,
    ImagingObject,
}

impl DataObjectType {
    pub const ALL: [DataObjectType; 8] = [
        DataObjectType::Dataset,
        DataObjectType::Study,
        DataObjectType::ClinicalTrial,
        DataObjectType::ParticipantClinical,
        DataObjectType::ParticipantOmics,
        DataObjectType::ParticipantImaging,
        DataObjectType::SequenceFile,
        DataObjectType::ImagingObject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataObjectType::Dataset => "dataset",
            DataObjectType::Study => "study",
            DataObjectType::ClinicalTrial => "clinical_trial",
            DataObjectType::ParticipantClinical => "participant_clinical",
            DataObjectType::ParticipantOmics => "participant_omics",
            DataObjectType::ParticipantImaging => "participant_imaging",
            DataObjectType::SequenceFile => "sequence_file",
            DataObjectType::ImagingObject => "imaging_object",
        }
    }
}

impl fmt::Display for DataObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataObjectType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DataObjectType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::BadRequest(format!("unknown object type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Integer,
    Date,
    Pid,
    DoiList,
    ControlledTerm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn new(name: &str, kind: FieldKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataSchema {
    pub object_type: DataObjectType,
    pub required_fields: Vec<FieldSpec>,
    #[serde(default)]
    pub controlled_vocabularies: BTreeMap<String, BTreeSet<String>>,
}

impl MetadataSchema {
    /// The shipped minimum schema. Every type needs enough to be searched and
    /// resolved back to its host; studies and trials also carry a study id and
    /// publication DOIs.
    pub fn default_for(object_type: DataObjectType) -> Self {
        let mut fields = vec![
            FieldSpec::new("title", FieldKind::Text),
            FieldSpec::new("description", FieldKind::Text),
            FieldSpec::new("object_type", FieldKind::ControlledTerm),
            FieldSpec::new("hosting_platform_id", FieldKind::Text),
            FieldSpec::new("primary_platform_pid", FieldKind::Pid),
            FieldSpec::new("access_tier", FieldKind::ControlledTerm),
        ];
        if matches!(
            object_type,
            DataObjectType::Study | DataObjectType::ClinicalTrial
        ) {
            fields.push(FieldSpec::new("study_id", FieldKind::Text));
            fields.push(FieldSpec::new("publication_dois", FieldKind::DoiList));
        }
        let mut vocabularies = BTreeMap::new();
        vocabularies.insert(
            "object_type".to_string(),
            DataObjectType::ALL
                .iter()
                .map(|t| t.as_str().to_string())
                .collect(),
        );
        vocabularies.insert(
            "access_tier".to_string(),
            AccessTier::ALL
                .iter()
                .map(|t| t.as_str().to_string())
                .collect(),
        );
        Self {
            object_type,
            required_fields: fields,
            controlled_vocabularies: vocabularies,
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.required_fields.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormalityDimension {
    Standards,
    Apis,
    MeshGovernance,
    DataGovernance,
    PlatformGovernance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormalityLevel {
    Informal,
    Moderate,
    Formal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DmmVisibility {
    #[default]
    Public,
    Mixed,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinkageMode {
    #[default]
    None,
    Guid,
}

fn default_license() -> String {
    DEFAULT_DMM_LICENSE.to_string()
}

fn default_notice() -> String {
    DEFAULT_USAGE_NOTICE.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshManifest {
    pub mesh_id: String,
    pub supported_types: BTreeSet<DataObjectType>,
    pub schemas: BTreeMap<DataObjectType, MetadataSchema>,
    #[serde(default)]
    pub security_requirements: Vec<String>,
    #[serde(default)]
    pub usage_stats_required: bool,
    #[serde(default)]
    pub dmm_visibility: DmmVisibility,
    #[serde(default)]
    pub formality: BTreeMap<FormalityDimension, FormalityLevel>,
    #[serde(default)]
    pub linkage_mode: LinkageMode,
    /// License attached to every DMM record.
    #[serde(default = "default_license")]
    pub dmm_license: String,
    /// Text shown the first time a hub session is used.
    #[serde(default = "default_notice")]
    pub usage_collection_notice: String,
}

impl MeshManifest {
    /// A manifest supporting `types` with the shipped default schemas.
    pub fn with_default_schemas(
        mesh_id: &str,
        types: impl IntoIterator<Item = DataObjectType>,
    ) -> Self {
        let supported_types: BTreeSet<_> = types.into_iter().collect();
        let schemas = supported_types
            .iter()
            .map(|t| (*t, MetadataSchema::default_for(*t)))
            .collect();
        Self {
            mesh_id: mesh_id.to_string(),
            supported_types,
            schemas,
            security_requirements: Vec::new(),
            usage_stats_required: false,
            dmm_visibility: DmmVisibility::Public,
            formality: BTreeMap::new(),
            linkage_mode: LinkageMode::None,
            dmm_license: default_license(),
            usage_collection_notice: default_notice(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::BadFixture {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    // manifest
    InvalidNamespace,
    MissingSchema,
    ExtraSchema,
    SchemaTypeMismatch,
    DuplicateField,
    MissingVocabulary,
    MissingLicense,
    // metadata
    MissingField,
    WrongKind,
    BadTerm,
    FieldConflict,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_value(self).expect("enum serializes");
        f.write_str(json.as_str().unwrap_or("UNKNOWN"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            code,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{} {}: {}", self.code, field, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

/// Checks every manifest invariant. The result is sorted, so it does not
/// depend on the order schemas were declared in.
pub fn validate_manifest(m: &MeshManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if !is_valid_namespace(&m.mesh_id) {
        out.push(Violation::new(
            ViolationCode::InvalidNamespace,
            Some("mesh_id"),
            format!(
                "mesh_id `{}` is not a valid PID namespace ([a-z0-9.-]+)",
                m.mesh_id
            ),
        ));
    }
    for t in &m.supported_types {
        if !m.schemas.contains_key(t) {
            out.push(Violation::new(
                ViolationCode::MissingSchema,
                Some(t.as_str()),
                format!("supported type {t} has no minimum metadata schema"),
            ));
        }
    }
    for (t, schema) in &m.schemas {
        if !m.supported_types.contains(t) {
            out.push(Violation::new(
                ViolationCode::ExtraSchema,
                Some(t.as_str()),
                format!("schema given for unsupported type {t}"),
            ));
        }
        if schema.object_type != *t {
            out.push(Violation::new(
                ViolationCode::SchemaTypeMismatch,
                Some(t.as_str()),
                format!(
                    "schema keyed {t} declares object_type {}",
                    schema.object_type
                ),
            ));
        }
        let mut seen = BTreeSet::new();
        for field in &schema.required_fields {
            if !seen.insert(field.name.as_str()) {
                out.push(Violation::new(
                    ViolationCode::DuplicateField,
                    Some(&field.name),
                    format!("field declared twice in {t} schema"),
                ));
            }
            if field.kind == FieldKind::ControlledTerm
                && schema
                    .controlled_vocabularies
                    .get(&field.name)
                    .is_none_or(|v| v.is_empty())
            {
                out.push(Violation::new(
                    ViolationCode::MissingVocabulary,
                    Some(&field.name),
                    format!("controlled term in {t} schema has no vocabulary"),
                ));
            }
        }
    }
    if m.dmm_license.trim().is_empty() {
        out.push(Violation::new(
            ViolationCode::MissingLicense,
            Some("dmm_license"),
            "DMM license is empty",
        ));
    }
    out.sort();
    out.dedup();
    out
}

pub fn minimum_schema_for(m: &MeshManifest, t: DataObjectType) -> Result<&MetadataSchema> {
    if !m.supported_types.contains(&t) {
        return Err(Error::UnsupportedObjectType(t));
    }
    m.schemas.get(&t).ok_or(Error::UnsupportedObjectType(t))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformDescriptor {
    pub platform_id: String,
    pub endpoint: String,
    #[serde(default)]
    pub attested_requirements: BTreeSet<String>,
    #[serde(default)]
    pub access_tiers_served: BTreeSet<AccessTier>,
    /// A node may decline usage reports when the mesh does not require them.
    #[serde(default = "yes")]
    pub accepts_usage_reports: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eligibility {
    pub eligible: bool,
    pub missing: BTreeSet<String>,
}

pub fn check_platform_eligibility(m: &MeshManifest, p: &PlatformDescriptor) -> Eligibility {
    let missing: BTreeSet<String> = m
        .security_requirements
        .iter()
        .filter(|r| !p.attested_requirements.contains(*r))
        .cloned()
        .collect();
    Eligibility {
        eligible: missing.is_empty(),
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn platform(attested: &[&str]) -> PlatformDescriptor {
        PlatformDescriptor {
            platform_id: "node-a".into(),
            endpoint: "http://localhost".into(),
            attested_requirements: attested.iter().map(|s| s.to_string()).collect(),
            access_tiers_served: BTreeSet::new(),
            accepts_usage_reports: true,
        }
    }

    #[test]
    fn valid_manifest_has_no_violations() {
        let m = MeshManifest::with_default_schemas("demo-mesh", [DataObjectType::Dataset]);
        assert_eq!(validate_manifest(&m), vec![]);
    }

    #[test]
    fn missing_schema_reported() {
        let mut m = MeshManifest::with_default_schemas("demo-mesh", [DataObjectType::Dataset]);
        m.supported_types.insert(DataObjectType::ClinicalTrial);
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::MissingSchema);
        assert_eq!(v[0].field.as_deref(), Some("clinical_trial"));
    }

    #[test]
    fn bad_mesh_id_fails_namespace_grammar() {
        let m = MeshManifest::with_default_schemas("Bad Mesh!", [DataObjectType::Dataset]);
        let codes: Vec<_> = validate_manifest(&m).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::InvalidNamespace]);
        assert!(!is_valid_namespace("Bad Mesh!"));
    }

    #[test]
    fn extra_and_mismatched_schemas() {
        let mut m = MeshManifest::with_default_schemas("m", [DataObjectType::Dataset]);
        m.schemas.insert(
            DataObjectType::Study,
            MetadataSchema::default_for(DataObjectType::Dataset),
        );
        let codes: Vec<_> = validate_manifest(&m).into_iter().map(|v| v.code).collect();
        assert_eq!(
            codes,
            vec![
                ViolationCode::ExtraSchema,
                ViolationCode::SchemaTypeMismatch
            ]
        );
    }

    #[test]
    fn duplicate_field_and_missing_vocabulary() {
        let mut m = MeshManifest::with_default_schemas("m", [DataObjectType::Dataset]);
        let schema = m.schemas.get_mut(&DataObjectType::Dataset).unwrap();
        schema
            .required_fields
            .push(FieldSpec::new("title", FieldKind::Text));
        schema
            .required_fields
            .push(FieldSpec::new("modality", FieldKind::ControlledTerm));
        let codes: Vec<_> = validate_manifest(&m).into_iter().map(|v| v.code).collect();
        assert_eq!(
            codes,
            vec![
                ViolationCode::DuplicateField,
                ViolationCode::MissingVocabulary
            ]
        );
    }

    #[test]
    fn study_and_trial_schemas_can_differ() {
        let mut m = MeshManifest::with_default_schemas(
            "m",
            [DataObjectType::Study, DataObjectType::ClinicalTrial],
        );
        m.schemas
            .get_mut(&DataObjectType::ClinicalTrial)
            .unwrap()
            .required_fields
            .push(FieldSpec::new("trial_registration", FieldKind::Text));
        let study = minimum_schema_for(&m, DataObjectType::Study).unwrap();
        let trial = minimum_schema_for(&m, DataObjectType::ClinicalTrial).unwrap();
        assert_ne!(study.required_fields, trial.required_fields);
    }

    #[test]
    fn minimum_schema_lookup() {
        let m = MeshManifest::with_default_schemas("m", [DataObjectType::Dataset]);
        assert_eq!(
            minimum_schema_for(&m, DataObjectType::Dataset)
                .unwrap()
                .object_type,
            DataObjectType::Dataset
        );
        assert!(matches!(
            minimum_schema_for(&m, DataObjectType::ImagingObject),
            Err(Error::UnsupportedObjectType(DataObjectType::ImagingObject))
        ));
    }

    #[test]
    fn default_schema_fields() {
        let names = |t| {
            MetadataSchema::default_for(t)
                .required_fields
                .into_iter()
                .map(|f| f.name)
                .collect::<Vec<_>>()
        };
        assert_eq!(
            names(DataObjectType::Dataset),
            [
                "title",
                "description",
                "object_type",
                "hosting_platform_id",
                "primary_platform_pid",
                "access_tier"
            ]
        );
        assert!(names(DataObjectType::Study).contains(&"publication_dois".to_string()));
        assert!(names(DataObjectType::ClinicalTrial).contains(&"study_id".to_string()));
    }

    #[test]
    fn eligibility_cases() {
        let mut m = MeshManifest::with_default_schemas("m", [DataObjectType::Dataset]);
        m.security_requirements = vec!["enc-at-rest".into(), "audit-log".into()];
        let e = check_platform_eligibility(&m, &platform(&["enc-at-rest", "audit-log", "mfa"]));
        assert!(e.eligible && e.missing.is_empty());
        let e = check_platform_eligibility(&m, &platform(&["enc-at-rest"]));
        assert!(!e.eligible);
        assert_eq!(e.missing, ["audit-log".to_string()].into_iter().collect());
        m.security_requirements.clear();
        assert!(check_platform_eligibility(&m, &platform(&[])).eligible);
    }

    #[test]
    fn manifest_json_uses_field_names() {
        let m = MeshManifest::with_default_schemas("demo-mesh", [DataObjectType::Dataset]);
        let v = serde_json::to_value(&m).unwrap();
        for key in [
            "mesh_id",
            "supported_types",
            "schemas",
            "security_requirements",
            "usage_stats_required",
            "dmm_visibility",
            "formality",
            "linkage_mode",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: MeshManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    fn reqs() -> impl Strategy<Value = BTreeSet<String>> {
        prop::collection::btree_set("[a-e]", 0..5)
    }

    proptest! {
        #[test]
        fn adding_attestations_never_revokes_eligibility(required in reqs(), attested in reqs(), extra in reqs()) {
            let mut m = MeshManifest::with_default_schemas("m", [DataObjectType::Dataset]);
            m.security_requirements = required.into_iter().collect();
            let mut p = platform(&[]);
            p.attested_requirements = attested;
            let before = check_platform_eligibility(&m, &p);
            p.attested_requirements.extend(extra);
            let after = check_platform_eligibility(&m, &p);
            prop_assert!(!before.eligible || after.eligible);
            prop_assert!(after.missing.is_subset(&before.missing));
        }

        #[test]
        fn validation_is_order_insensitive_and_idempotent(
            types in prop::collection::btree_set(prop::sample::select(DataObjectType::ALL.to_vec()), 1..6),
            drop in prop::collection::vec(any::<bool>(), 8),
            seed in any::<u64>(),
        ) {
            let mut m = MeshManifest::with_default_schemas("m", types.iter().copied());
            for (i, t) in DataObjectType::ALL.iter().enumerate() {
                if drop[i] { m.schemas.remove(t); }
            }
            // Rebuild the JSON object with schema keys in a shuffled order.
            let mut keys: Vec<_> = m.schemas.keys().copied().collect();
            let n = keys.len().max(1);
            keys.rotate_left((seed as usize) % n);
            if seed % 2 == 0 { keys.reverse(); }
            let mut schemas = serde_json::Map::new();
            for k in keys {
                schemas.insert(k.as_str().to_string(), serde_json::to_value(&m.schemas[&k]).unwrap());
            }
            let mut json = serde_json::to_value(&m).unwrap();
            json["schemas"] = serde_json::Value::Object(schemas);
            let permuted: MeshManifest = serde_json::from_value(json).unwrap();
            let a = validate_manifest(&m);
            prop_assert_eq!(&a, &validate_manifest(&permuted));
            prop_assert_eq!(&a, &validate_manifest(&m));
        }
    }
}
