//! System-wide master tables: building type codes and reusable typologies.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TypeCategory {
    Wall,
    Roof,
    Use,
    State,
}

impl TypeCategory {
    pub const ALL: [TypeCategory; 4] = [TypeCategory::Wall, TypeCategory::Roof, TypeCategory::Use, TypeCategory::State];

    pub fn as_str(self) -> &'static str {
        match self {
            TypeCategory::Wall => "Wall",
            TypeCategory::Roof => "Roof",
            TypeCategory::Use => "Use",
            TypeCategory::State => "State",
        }
    }
}

impl fmt::Display for TypeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TypeCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wall" | "pared" => Ok(TypeCategory::Wall),
            "roof" | "techo" => Ok(TypeCategory::Roof),
            "use" | "uso" => Ok(TypeCategory::Use),
            "state" | "estado" => Ok(TypeCategory::State),
            _ => Err(Error::Invalid(format!("unknown type category {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeEntry {
    pub code: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
}

fn same(a: &str, b: &str) -> bool {
    a.trim().to_uppercase() == b.trim().to_uppercase()
}

/// Known codes of one category. Raw cadastral values resolve to a code by
/// case-insensitive match on the code itself, then on its aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeMaster {
    pub category: TypeCategory,
    #[serde(default)]
    pub entries: Vec<TypeEntry>,
}

impl TypeMaster {
    pub fn new(category: TypeCategory) -> TypeMaster {
        TypeMaster { category, entries: Vec::new() }
    }

    pub fn resolve(&self, raw: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| same(&e.code, raw))
            .or_else(|| self.entries.iter().find(|e| e.aliases.iter().any(|a| same(a, raw))))
            .map(|e| e.code.as_str())
    }

    pub fn register(&mut self, code: &str, label: &str) -> Result<()> {
        let code = code.trim();
        if code.is_empty() {
            return Err(Error::Invalid("type code must not be empty".into()));
        }
        if self.entries.iter().any(|e| same(&e.code, code)) {
            return Err(Error::DuplicateCode { category: self.category, code: code.to_string() });
        }
        if let Some(owner) = self.resolve(code) {
            return Err(Error::AliasConflict {
                category: self.category,
                alias: code.to_string(),
                code: owner.to_string(),
            });
        }
        self.entries.push(TypeEntry {
            code: code.to_string(),
            label: label.trim().to_string(),
            aliases: BTreeSet::new(),
        });
        self.entries.sort_by(|a, b| a.code.cmp(&b.code));
        Ok(())
    }

    pub fn add_alias(&mut self, alias: &str, code: &str) -> Result<()> {
        let alias = alias.trim();
        let category = self.category;
        match self.resolve(alias) {
            Some(owner) if same(owner, code) => return Ok(()),
            Some(owner) => {
                return Err(Error::AliasConflict { category, alias: alias.to_string(), code: owner.to_string() })
            }
            None => {}
        }
        let entry = self
            .entries
            .iter_mut()
            .find(|e| same(&e.code, code))
            .ok_or_else(|| Error::UnknownCode { category, code: code.to_string() })?;
        entry.aliases.insert(alias.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypologyMaster {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeMasters {
    pub wall: TypeMaster,
    pub roof: TypeMaster,
    #[serde(rename = "use")]
    pub use_type: TypeMaster,
    pub state: TypeMaster,
}

impl Default for TypeMasters {
    fn default() -> Self {
        TypeMasters {
            wall: TypeMaster::new(TypeCategory::Wall),
            roof: TypeMaster::new(TypeCategory::Roof),
            use_type: TypeMaster::new(TypeCategory::Use),
            state: TypeMaster::new(TypeCategory::State),
        }
    }
}

impl TypeMasters {
    pub fn get(&self, category: TypeCategory) -> &TypeMaster {
        match category {
            TypeCategory::Wall => &self.wall,
            TypeCategory::Roof => &self.roof,
            TypeCategory::Use => &self.use_type,
            TypeCategory::State => &self.state,
        }
    }

    pub fn get_mut(&mut self, category: TypeCategory) -> &mut TypeMaster {
        match category {
            TypeCategory::Wall => &mut self.wall,
            TypeCategory::Roof => &mut self.roof,
            TypeCategory::Use => &mut self.use_type,
            TypeCategory::State => &mut self.state,
        }
    }
}

/// Everything shared between projects, persisted as `masters.json` at the store root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masters {
    pub types: TypeMasters,
    #[serde(default)]
    pub typologies: Vec<TypologyMaster>,
}

impl Masters {
    pub fn register_type(&mut self, category: TypeCategory, code: &str, label: &str) -> Result<&TypeMaster> {
        self.types.get_mut(category).register(code, label)?;
        Ok(self.types.get(category))
    }

    pub fn add_alias(&mut self, category: TypeCategory, alias: &str, code: &str) -> Result<&TypeMaster> {
        self.types.get_mut(category).add_alias(alias, code)?;
        Ok(self.types.get(category))
    }

    pub fn typology_master(&self, id: &str) -> Result<&TypologyMaster> {
        self.typologies.iter().find(|m| m.id == id).ok_or_else(|| Error::UnknownMaster(id.to_string()))
    }

    /// Adds a typology to the system list unless one with the same name exists.
    pub fn remember_typology(&mut self, name: &str, description: &str) -> &TypologyMaster {
        if let Some(i) = self.typologies.iter().position(|m| m.name == name) {
            return &self.typologies[i];
        }
        let n = self.typologies.iter().filter_map(|m| m.id.strip_prefix('M')?.parse::<u64>().ok()).max().unwrap_or(0);
        self.typologies.push(TypologyMaster {
            id: format!("M{}", n + 1),
            name: name.to_string(),
            description: description.to_string(),
        });
        self.typologies.last().expect("just pushed")
    }
}
