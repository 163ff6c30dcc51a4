//! Data handling requirement model.
//!
//! A DHR type is a property domain plus a comparison predicate deciding
//! whether a property offered by a node satisfies a property demanded by a
//! client. Clients demand a set of acceptable properties per type; a node
//! is eligible when, for every demanded type, it offers at least one
//! property that satisfies at least one demanded property.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::DhrError;
use crate::ids::NodeId;

/// A property literal: a label for equality types, a level for ordered types.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Property {
    Level(u64),
    Label(String),
}

impl Property {
    pub fn label(s: impl Into<String>) -> Self {
        Property::Label(s.into())
    }

    pub fn as_level(&self) -> Option<u64> {
        match self {
            Property::Level(v) => Some(*v),
            Property::Label(_) => None,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Level(v) => write!(f, "{v}"),
            Property::Label(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Property {
    fn from(s: &str) -> Self {
        Property::Label(s.to_string())
    }
}

impl From<u64> for Property {
    fn from(v: u64) -> Self {
        Property::Level(v)
    }
}

pub type Predicate = Arc<dyn Fn(&Property, &Property) -> bool + Send + Sync>;

/// How two properties of one type are compared.
#[derive(Clone)]
pub enum DhrKind {
    /// Offered must equal demanded (locations, media traits).
    EqualitySet,
    /// Offered must be at least the demanded level (encryption bits, retention).
    OrderedThreshold,
    /// A registered predicate `(offered, demanded) -> bool`.
    Custom { name: String, predicate: Predicate },
}

impl DhrKind {
    pub fn name(&self) -> &str {
        match self {
            DhrKind::EqualitySet => "equality",
            DhrKind::OrderedThreshold => "threshold",
            DhrKind::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for DhrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for DhrKind {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhrType {
    pub id: String,
    pub kind: DhrKind,
    pub domain: Vec<Property>,
    /// Textual spellings accepted by the query language, e.g. `AES-256 -> 256`.
    pub aliases: BTreeMap<String, Property>,
    pub unit: Option<String>,
    /// Demanded levels are lifetimes in seconds; items expire accordingly.
    pub expires: bool,
}

impl DhrType {
    pub fn new(id: impl Into<String>, kind: DhrKind, domain: Vec<Property>) -> Result<Self, DhrError> {
        let ty = DhrType {
            id: id.into(),
            kind,
            domain,
            aliases: BTreeMap::new(),
            unit: None,
            expires: false,
        };
        ty.validate()?;
        Ok(ty)
    }

    pub fn equality<S: Into<String>>(id: &str, labels: impl IntoIterator<Item = S>) -> Result<Self, DhrError> {
        let domain = labels.into_iter().map(|s| Property::Label(s.into())).collect();
        Self::new(id, DhrKind::EqualitySet, domain)
    }

    pub fn threshold(id: &str, levels: impl IntoIterator<Item = u64>) -> Result<Self, DhrError> {
        Self::new(id, DhrKind::OrderedThreshold, levels.into_iter().map(Property::Level).collect())
    }

    pub fn with_alias(mut self, alias: &str, prop: Property) -> Result<Self, DhrError> {
        if !self.contains(&prop) {
            return Err(DhrError::UnknownProperty { ty: self.id.clone(), property: prop.to_string() });
        }
        let shadows = Property::Label(alias.to_string());
        if self.contains(&shadows) && shadows != prop {
            return Err(DhrError::InvalidType {
                ty: self.id.clone(),
                reason: format!("alias `{alias}` shadows a domain label"),
            });
        }
        self.aliases.insert(alias.to_string(), prop);
        Ok(self)
    }

    fn validate(&self) -> Result<(), DhrError> {
        if self.domain.is_empty() {
            return Err(DhrError::EmptyDomain(self.id.clone()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.domain {
            if !seen.insert(p) {
                return Err(DhrError::DuplicateProperty { ty: self.id.clone(), property: p.to_string() });
            }
        }
        match self.kind {
            DhrKind::OrderedThreshold => {
                let levels: Option<Vec<u64>> = self.domain.iter().map(Property::as_level).collect();
                let Some(levels) = levels else {
                    return Err(DhrError::NotIncreasing(self.id.clone()));
                };
                if levels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(DhrError::NotIncreasing(self.id.clone()));
                }
            }
            DhrKind::EqualitySet => {
                if self.domain.iter().any(|p| p.as_level().is_some()) {
                    return Err(DhrError::InvalidType {
                        ty: self.id.clone(),
                        reason: "equality domains hold string labels".into(),
                    });
                }
            }
            DhrKind::Custom { .. } => {}
        }
        if self.expires && !matches!(self.kind, DhrKind::OrderedThreshold) {
            return Err(DhrError::InvalidType {
                ty: self.id.clone(),
                reason: "only threshold types can carry lifetimes".into(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, p: &Property) -> bool {
        self.domain.contains(p)
    }

    fn check(&self, p: &Property) -> Result<(), DhrError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(DhrError::UnknownProperty { ty: self.id.clone(), property: p.to_string() })
        }
    }

    /// Maps a quoted literal from a statement onto a domain property.
    pub fn resolve_label(&self, text: &str) -> Option<Property> {
        if let Some(p) = self.aliases.get(text) {
            return Some(p.clone());
        }
        let label = Property::Label(text.to_string());
        if self.contains(&label) {
            return Some(label);
        }
        // numeric strings are accepted for levels: '256'
        text.parse::<u64>().ok().map(Property::Level).filter(|p| self.contains(p))
    }
}

/// Compares an offered against a demanded property of `ty`.
pub fn property_satisfies(ty: &DhrType, offered: &Property, demanded: &Property) -> Result<bool, DhrError> {
    ty.check(offered)?;
    ty.check(demanded)?;
    Ok(compare(ty, offered, demanded))
}

fn compare(ty: &DhrType, offered: &Property, demanded: &Property) -> bool {
    match &ty.kind {
        DhrKind::EqualitySet => offered == demanded,
        DhrKind::OrderedThreshold => match (offered, demanded) {
            (Property::Level(o), Property::Level(d)) => o >= d,
            _ => false,
        },
        DhrKind::Custom { predicate, .. } => predicate(offered, demanded),
    }
}

/// A client's per-item demand: type id -> acceptable properties.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DhrRequest {
    pub demands: BTreeMap<String, BTreeSet<Property>>,
}

impl DhrRequest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, ty: &str, props: impl IntoIterator<Item = Property>) -> Self {
        self.demands.entry(ty.to_string()).or_default().extend(props);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }
}

impl fmt::Display for DhrRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (ty, props) in &self.demands {
            if !first {
                f.write_str(" AND ")?;
            }
            first = false;
            let list: Vec<String> = props.iter().map(|p| p.to_string()).collect();
            write!(f, "{ty}={{{}}}", list.join(","))?;
        }
        Ok(())
    }
}

/// What a node supports. For threshold types the set holds the single
/// maximum level the node provides.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeCapabilities {
    pub node_id: NodeId,
    #[serde(default)]
    pub supported: BTreeMap<String, BTreeSet<Property>>,
}

impl NodeCapabilities {
    pub fn new(node_id: NodeId) -> Self {
        NodeCapabilities { node_id, supported: BTreeMap::new() }
    }

    pub fn with(mut self, ty: &str, props: impl IntoIterator<Item = Property>) -> Self {
        self.supported.entry(ty.to_string()).or_default().extend(props);
        self
    }
}

/// Decides whether `caps` fulfils every demand of `req`.
pub fn node_is_eligible(caps: &NodeCapabilities, req: &DhrRequest, registry: &DhrRegistry) -> bool {
    req.demands.iter().all(|(ty_id, demanded)| {
        let (Some(ty), Some(offered)) = (registry.get(ty_id), caps.supported.get(ty_id)) else {
            return false;
        };
        offered.iter().any(|o| demanded.iter().any(|d| compare(ty, o, d)))
    })
}

/// One node's announcement, ordered by a per-node sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CapabilityRecord {
    pub seq: u64,
    pub caps: NodeCapabilities,
}

/// Globally replicated map of node -> supported properties.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CapabilityStore {
    entries: BTreeMap<NodeId, CapabilityRecord>,
}

impl CapabilityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_caps(all: impl IntoIterator<Item = NodeCapabilities>) -> Self {
        let mut store = Self::new();
        for caps in all {
            store.merge(CapabilityRecord { seq: 0, caps });
        }
        store
    }

    /// Last-writer-wins by announcement sequence. Returns whether anything changed.
    pub fn merge(&mut self, record: CapabilityRecord) -> bool {
        match self.entries.get(&record.caps.node_id) {
            Some(cur) if cur.seq >= record.seq => false,
            _ => {
                self.entries.insert(record.caps.node_id, record);
                true
            }
        }
    }

    pub fn get(&self, node: NodeId) -> Option<&NodeCapabilities> {
        self.entries.get(&node).map(|r| &r.caps)
    }

    pub fn record(&self, node: NodeId) -> Option<&CapabilityRecord> {
        self.entries.get(&node)
    }

    pub fn records(&self) -> impl Iterator<Item = &CapabilityRecord> {
        self.entries.values()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Nodes whose capabilities satisfy `req`, in ascending node id order.
pub fn eligible_nodes(all_caps: &CapabilityStore, req: &DhrRequest, registry: &DhrRegistry) -> Vec<NodeId> {
    all_caps
        .entries
        .iter()
        .filter(|(_, rec)| node_is_eligible(&rec.caps, req, registry))
        .map(|(id, _)| *id)
        .collect()
}

/// The set of known DHR types plus the comparison kinds available to them.
#[derive(Clone, Default)]
pub struct DhrRegistry {
    types: BTreeMap<String, DhrType>,
    kinds: BTreeMap<String, Predicate>,
}

impl fmt::Debug for DhrRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DhrRegistry")
            .field("types", &self.types)
            .field("kinds", &self.kinds.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for DhrRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.types == other.types
    }
}

#[derive(Serialize, Deserialize)]
struct TypeDoc {
    id: String,
    kind: String,
    domain: Vec<Property>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    aliases: BTreeMap<String, Property>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    expires: bool,
}

impl DhrRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes a custom comparison kind available to documents loaded later.
    pub fn with_kind(
        mut self,
        name: &str,
        predicate: impl Fn(&Property, &Property) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.kinds.insert(name.to_string(), Arc::new(predicate));
        self
    }

    pub fn insert(&mut self, ty: DhrType) -> Result<(), DhrError> {
        ty.validate()?;
        if self.types.contains_key(&ty.id) {
            return Err(DhrError::DuplicateType(ty.id));
        }
        self.types.insert(ty.id.clone(), ty);
        Ok(())
    }

    pub fn from_types(types: impl IntoIterator<Item = DhrType>) -> Result<Self, DhrError> {
        let mut reg = Self::new();
        for ty in types {
            reg.insert(ty)?;
        }
        Ok(reg)
    }

    pub fn from_json(doc: &str) -> Result<Self, DhrError> {
        let mut reg = Self::new();
        reg.load_json(doc)?;
        Ok(reg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, DhrError> {
        let mut reg = Self::new();
        reg.load_value(value)?;
        Ok(reg)
    }

    pub fn load_json(&mut self, doc: &str) -> Result<(), DhrError> {
        let value: serde_json::Value = serde_json::from_str(doc).map_err(|e| DhrError::Json(e.to_string()))?;
        self.load_value(value)
    }

    pub fn load_value(&mut self, value: serde_json::Value) -> Result<(), DhrError> {
        let docs: Vec<TypeDoc> = serde_json::from_value(value).map_err(|e| DhrError::Json(e.to_string()))?;
        for doc in docs {
            let kind = match doc.kind.as_str() {
                "equality" => DhrKind::EqualitySet,
                "threshold" => DhrKind::OrderedThreshold,
                other => match self.kinds.get(other) {
                    Some(p) => DhrKind::Custom { name: other.to_string(), predicate: p.clone() },
                    None => return Err(DhrError::UnknownKind(other.to_string())),
                },
            };
            let mut ty = DhrType::new(doc.id, kind, doc.domain)?;
            for (alias, prop) in doc.aliases {
                ty = ty.with_alias(&alias, prop)?;
            }
            ty.unit = doc.unit;
            ty.expires = doc.expires;
            self.insert(ty)?;
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        let docs: Vec<TypeDoc> = self
            .types
            .values()
            .map(|t| TypeDoc {
                id: t.id.clone(),
                kind: t.kind.name().to_string(),
                domain: t.domain.clone(),
                aliases: t.aliases.clone(),
                unit: t.unit.clone(),
                expires: t.expires,
            })
            .collect();
        serde_json::to_value(docs).expect("registry documents serialize")
    }

    pub fn get(&self, id: &str) -> Option<&DhrType> {
        self.types.get(id)
    }

    pub fn types(&self) -> impl Iterator<Item = &DhrType> {
        self.types.values()
    }

    pub fn satisfies(&self, ty: &str, offered: &Property, demanded: &Property) -> Result<bool, DhrError> {
        let ty = self.get(ty).ok_or_else(|| DhrError::UnknownDhrType(ty.to_string()))?;
        property_satisfies(ty, offered, demanded)
    }

    pub fn validate_request(&self, req: &DhrRequest) -> Result<(), DhrError> {
        for (ty_id, props) in &req.demands {
            let ty = self.get(ty_id).ok_or_else(|| DhrError::UnknownDhrType(ty_id.clone()))?;
            if props.is_empty() {
                return Err(DhrError::EmptyDemand(ty_id.clone()));
            }
            for p in props {
                ty.check(p)?;
            }
        }
        Ok(())
    }

    pub fn validate_caps(&self, caps: &NodeCapabilities) -> Result<(), DhrError> {
        for (ty_id, props) in &caps.supported {
            let ty = self.get(ty_id).ok_or_else(|| DhrError::UnknownDhrType(ty_id.clone()))?;
            if matches!(ty.kind, DhrKind::OrderedThreshold) && props.len() > 1 {
                return Err(DhrError::InvalidType {
                    ty: ty_id.clone(),
                    reason: format!("{} advertises more than one level", caps.node_id),
                });
            }
            for p in props {
                ty.check(p)?;
            }
        }
        Ok(())
    }

    /// Strictest lifetime demanded by `req`, if any expiring type is demanded.
    pub fn lifetime(&self, req: &DhrRequest) -> Option<Duration> {
        req.demands
            .iter()
            .filter(|(id, _)| self.get(id).is_some_and(|t| t.expires))
            .flat_map(|(_, props)| props.iter().filter_map(Property::as_level))
            .min()
            .map(Duration::from_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> DhrRegistry {
        DhrRegistry::from_json(
            r#"[{"id":"location","kind":"equality","domain":["DE","FR","UK","US"]},
                {"id":"encryption","kind":"threshold","domain":[0,128,192,256],"aliases":{"AES-256":256,"AES-192":192,"AES-128":128},"unit":"bits"}]"#,
        )
        .unwrap()
    }

    #[test]
    fn equality_and_threshold_comparisons() {
        let reg = registry();
        let loc = reg.get("location").unwrap();
        let enc = reg.get("encryption").unwrap();
        assert!(property_satisfies(loc, &"DE".into(), &"DE".into()).unwrap());
        assert!(!property_satisfies(loc, &"DE".into(), &"FR".into()).unwrap());
        assert!(property_satisfies(enc, &256.into(), &192.into()).unwrap());
        assert!(!property_satisfies(enc, &0.into(), &192.into()).unwrap());
        assert!(property_satisfies(enc, &192.into(), &192.into()).unwrap());
    }

    #[test]
    fn out_of_domain_literal_is_rejected() {
        let reg = registry();
        let loc = reg.get("location").unwrap();
        assert_eq!(
            property_satisfies(loc, &"XX".into(), &"DE".into()),
            Err(DhrError::UnknownProperty { ty: "location".into(), property: "XX".into() })
        );
        let enc = reg.get("encryption").unwrap();
        assert!(property_satisfies(enc, &256.into(), &100.into()).is_err());
    }

    #[test]
    fn eligibility_examples() {
        let reg = registry();
        let caps = NodeCapabilities::new(NodeId(0))
            .with("location", ["DE".into()])
            .with("encryption", [256.into()]);
        let req = DhrRequest::new()
            .with("location", ["DE".into(), "FR".into(), "UK".into()])
            .with("encryption", [256.into()]);
        assert!(node_is_eligible(&caps, &req, &reg));
        assert!(node_is_eligible(&caps, &DhrRequest::new(), &reg));

        let us = NodeCapabilities::new(NodeId(1)).with("location", ["US".into()]);
        let req = DhrRequest::new().with("location", ["DE".into()]).with("encryption", [256.into()]);
        assert!(!node_is_eligible(&us, &req, &reg));
    }

    #[test]
    fn missing_type_on_node_fails_demand() {
        let reg = registry();
        let caps = NodeCapabilities::new(NodeId(0)).with("location", ["DE".into()]);
        let req = DhrRequest::new().with("encryption", [0.into()]);
        assert!(!node_is_eligible(&caps, &req, &reg));
    }

    #[test]
    fn domain_invariants() {
        assert_eq!(DhrType::equality("x", Vec::<String>::new()), Err(DhrError::EmptyDomain("x".into())));
        assert!(matches!(DhrType::equality("x", ["a", "a"]), Err(DhrError::DuplicateProperty { .. })));
        assert!(matches!(DhrType::threshold("t", [0, 10, 10]), Err(DhrError::DuplicateProperty { .. })));
        assert_eq!(DhrType::threshold("t", [5, 1]), Err(DhrError::NotIncreasing("t".into())));
        assert!(DhrType::threshold("t", [0, 1, 2]).is_ok());
    }

    #[test]
    fn registry_json_round_trip() {
        let reg = registry();
        let again = DhrRegistry::from_value(reg.to_value()).unwrap();
        assert_eq!(reg, again);
        assert_eq!(again.get("encryption").unwrap().resolve_label("AES-256"), Some(Property::Level(256)));
    }

    #[test]
    fn custom_kind_predicate() {
        // prefix match: offered "eu" covers demanded "eu-west"
        let reg = DhrRegistry::new()
            .with_kind("prefix", |o, d| matches!((o, d), (Property::Label(o), Property::Label(d)) if d.starts_with(o.as_str())));
        let mut reg = reg;
        reg.load_json(r#"[{"id":"zone","kind":"prefix","domain":["eu","eu-west","us"]}]"#).unwrap();
        assert!(reg.satisfies("zone", &"eu".into(), &"eu-west".into()).unwrap());
        assert!(!reg.satisfies("zone", &"us".into(), &"eu-west".into()).unwrap());
        assert!(matches!(
            DhrRegistry::from_json(r#"[{"id":"zone","kind":"prefix","domain":["eu"]}]"#),
            Err(DhrError::UnknownKind(_))
        ));
    }

    #[test]
    fn capability_store_last_writer_wins() {
        let mut store = CapabilityStore::new();
        let a = NodeCapabilities::new(NodeId(1)).with("location", ["DE".into()]);
        let b = NodeCapabilities::new(NodeId(1)).with("location", ["FR".into()]);
        assert!(store.merge(CapabilityRecord { seq: 1, caps: a.clone() }));
        assert!(store.merge(CapabilityRecord { seq: 2, caps: b.clone() }));
        assert!(!store.merge(CapabilityRecord { seq: 1, caps: a }));
        assert_eq!(store.get(NodeId(1)), Some(&b));
    }

    #[test]
    fn lifetime_takes_strictest_demand() {
        let mut reg = registry();
        let mut life = DhrType::threshold("max-lifetime", [60, 3600, 86400]).unwrap();
        life.expires = true;
        reg.insert(life).unwrap();
        let req = DhrRequest::new().with("max-lifetime", [3600.into(), 60.into()]);
        assert_eq!(reg.lifetime(&req), Some(Duration::from_secs(60)));
        assert_eq!(reg.lifetime(&DhrRequest::new()), None);
    }
}
