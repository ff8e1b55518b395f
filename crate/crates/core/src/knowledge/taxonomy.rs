use super::{ActionKind, KnowledgeError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    Sphere,
    Cylinder,
    Cube,
    Cone,
    Torus,
}

impl Primitive {
    pub const ALL: [Primitive; 5] =
        [Primitive::Sphere, Primitive::Cylinder, Primitive::Cube, Primitive::Cone, Primitive::Torus];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::Sphere => "sphere",
            Primitive::Cylinder => "cylinder",
            Primitive::Cube => "cube",
            Primitive::Cone => "cone",
            Primitive::Torus => "torus",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Primitive {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown primitive `{s}`"))
    }
}

/// Sorted copy of a primitive multiset, used for equality.
pub fn canonical(primitives: &[Primitive]) -> Vec<Primitive> {
    let mut v = primitives.to_vec();
    v.sort();
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectClass {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub affordances: BTreeSet<ActionKind>,
}

impl ObjectClass {
    pub fn affords(&self, action: ActionKind) -> bool {
        self.affordances.contains(&action)
    }
}

/// Serialized class entry. Primitive and affordance names are checked when
/// the document is turned into a [`Taxonomy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDocument {
    pub name: String,
    pub primitives: Vec<String>,
    #[serde(default)]
    pub affordances: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    #[serde(default)]
    pub classes: Vec<ClassDocument>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    classes: Vec<ObjectClass>,
}

impl ObjectClass {
    pub fn from_document(doc: ClassDocument) -> Result<Self, KnowledgeError> {
        if doc.name.is_empty() || doc.name == "unknown" {
            return Err(KnowledgeError::integrity(&doc.name, "invalid class name"));
        }
        if doc.primitives.is_empty() {
            return Err(KnowledgeError::integrity(&doc.name, "class needs at least one primitive"));
        }
        let primitives = doc
            .primitives
            .iter()
            .map(|p| p.parse::<Primitive>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| KnowledgeError::integrity(&doc.name, e))?;
        let mut affordances = BTreeSet::new();
        for a in &doc.affordances {
            let kind = a
                .parse::<ActionKind>()
                .ok()
                .filter(|k| k.is_affordable())
                .ok_or_else(|| {
                    KnowledgeError::integrity(&doc.name, format!("unknown affordance `{a}`"))
                })?;
            affordances.insert(kind);
        }
        Ok(ObjectClass { name: doc.name, primitives, affordances })
    }

    pub fn to_document(&self) -> ClassDocument {
        ClassDocument {
            name: self.name.clone(),
            primitives: self.primitives.iter().map(|p| p.to_string()).collect(),
            affordances: self.affordances.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl Taxonomy {
    pub fn from_document(doc: TaxonomyDocument) -> Result<Self, KnowledgeError> {
        let mut taxonomy = Taxonomy::default();
        for class in doc.classes {
            let class = ObjectClass::from_document(class)?;
            if taxonomy.class(&class.name).is_some() {
                return Err(KnowledgeError::integrity(&class.name, "duplicate class"));
            }
            taxonomy.classes.push(class);
        }
        Ok(taxonomy)
    }

    pub fn to_document(&self) -> TaxonomyDocument {
        TaxonomyDocument { classes: self.classes.iter().map(ObjectClass::to_document).collect() }
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("taxonomy serializes")
    }

    pub fn classes(&self) -> &[ObjectClass] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ObjectClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn affords(&self, class_name: &str, action: ActionKind) -> Result<bool, KnowledgeError> {
        self.class(class_name)
            .map(|c| c.affords(action))
            .ok_or_else(|| KnowledgeError::UnknownClass(class_name.to_string()))
    }

    /// Maps a measured primitive multiset to the unique class with the same
    /// multiset. `Ok(None)` when nothing matches.
    pub fn resolve_object_class(&self, primitives: &[Primitive]) -> Result<Option<&str>, KnowledgeError> {
        let wanted = canonical(primitives);
        let matches: Vec<&str> = self
            .classes
            .iter()
            .filter(|c| canonical(&c.primitives) == wanted)
            .map(|c| c.name.as_str())
            .collect();
        match matches.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(one)),
            many => Err(KnowledgeError::AmbiguousClass(many.iter().map(|s| s.to_string()).collect())),
        }
    }

    /// Insert or replace a class by name.
    pub(crate) fn upsert(&mut self, class: ObjectClass) {
        match self.classes.iter_mut().find(|c| c.name == class.name) {
            Some(slot) => *slot = class,
            None => self.classes.push(class),
        }
    }

    pub(crate) fn remove(&mut self, name: &str) -> bool {
        let before = self.classes.len();
        self.classes.retain(|c| c.name != name);
        before != self.classes.len()
    }
}
