//! The instance document: one JSON file carrying the constraint, the MDPs
//! and, for pure selection instances, the value distributions.

use serde::{Deserialize, Serialize};

use crate::chains::{validate_instance, Diagnostic, Mdp, RawMdp, ValidationReport};
use crate::constraints::Constraint;
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::exante::Objective;
use crate::policies::CicsInstance;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    #[serde(default)]
    pub objective: Objective,
    pub constraint: Constraint,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mdps: Vec<RawMdp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dists: Option<Vec<DiscreteDist>>,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub doc: InstanceDoc,
    pub mdps: Vec<Mdp>,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", crate::chains::pointer_token(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", crate::chains::pointer_token(variant))),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Parses a document, reporting the first schema error with its pointer.
pub fn parse_doc(text: &str) -> Result<InstanceDoc> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner();
        let message = if inner.is_syntax() || inner.is_eof() {
            format!(
                "malformed JSON at line {} column {}: {inner}",
                inner.line(),
                inner.column()
            )
        } else {
            inner.to_string()
        };
        Error::Diagnostics(vec![Diagnostic { pointer, message }])
    })
}

impl InstanceDoc {
    /// Structural checks on every MDP and the constraint arity.
    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_instance(&self.mdps, &self.constraint);
        if self.mdps.is_empty() {
            // The arity diagnostic from an empty MDP list is not meaningful.
            report.diagnostics.retain(|d| d.pointer != "/constraint");
            match &self.dists {
                None => report.diagnostics.push(Diagnostic {
                    pointer: "".into(),
                    message: "instance needs `mdps` or `dists`".into(),
                }),
                Some(d) => {
                    if let Err(e) = self.constraint.check_arity(d.len()) {
                        report.diagnostics.push(Diagnostic {
                            pointer: "/constraint".into(),
                            message: e.to_string(),
                        });
                    }
                }
            }
        } else if let Some(d) = &self.dists {
            if d.len() != self.mdps.len() {
                report.diagnostics.push(Diagnostic {
                    pointer: "/dists".into(),
                    message: format!("{} distributions for {} MDPs", d.len(), self.mdps.len()),
                });
            }
        }
        report.ok = report.diagnostics.is_empty();
        report
    }

    pub fn load(self) -> Result<Instance> {
        let report = self.validate();
        if !report.ok {
            return Err(Error::Diagnostics(report.diagnostics));
        }
        let mdps = self
            .mdps
            .iter()
            .enumerate()
            .map(|(i, m)| Mdp::from_raw(m, &format!("/mdps/{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance { doc: self, mdps })
    }
}

pub fn load_instance(text: &str) -> Result<Instance> {
    parse_doc(text)?.load()
}

impl Instance {
    pub fn cics(&self) -> Result<CicsInstance> {
        if self.mdps.is_empty() {
            return Err(Error::invalid("/mdps", "this command needs MDPs"));
        }
        CicsInstance::new(self.doc.constraint.clone(), self.mdps.clone(), self.doc.objective)
    }

    /// The explicit distributions, or the surrogate distributions of the
    /// MDPs when every MDP is a Markov chain.
    pub fn dists(&self) -> Result<Vec<DiscreteDist>> {
        if let Some(d) = &self.doc.dists {
            return Ok(d.clone());
        }
        if !self.mdps.iter().all(|m| m.is_chain()) {
            return Err(Error::invalid(
                "/dists",
                "no distributions given and the MDPs are not Markov chains",
            ));
        }
        self.mdps
            .iter()
            .map(|m| {
                let t = m.unroll_chain(crate::chains::DEFAULT_DEPTH_CAP)?;
                Ok(crate::amortize::surrogate_values(&t)?.dist)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_probability_pointer() {
        let text = r#"{"constraint":{"kind":"single"},"mdps":[{"root":"s0","states":{
            "s0":{"actions":[{"cost":0,"transitions":[{"to":"t","p":0.7}]}]},
            "t":{"terminal":true,"value":1}}}]}"#;
        let Err(Error::Diagnostics(d)) = load_instance(text) else {
            panic!()
        };
        assert_eq!(d[0].pointer, "/mdps/0/states/s0/actions/0");
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let Err(Error::Diagnostics(d)) = parse_doc(r#"{"constraint":{"kind":"single"},"dists":[{"atoms":[[1,-1]]}]}"#)
        else {
            panic!()
        };
        assert_eq!(d[0].pointer, "/dists/0");
        let Err(Error::Diagnostics(d)) = parse_doc(r#"{"constraint":{"kind":"uniform_matroid"},"dists":[]}"#) else {
            panic!()
        };
        assert_eq!(d[0].pointer, "/constraint");
        let Err(Error::Diagnostics(d)) = parse_doc("{") else {
            panic!()
        };
        assert!(d[0].message.contains("line 1"));
    }

    #[test]
    fn dists_round_trip() {
        let text = r#"{"constraint":{"kind":"uniform_matroid","k":1},"dists":[{"atoms":[[1,0.5],[0,0.5]]}]}"#;
        let inst = load_instance(text).unwrap();
        let again: InstanceDoc = serde_json::from_str(&serde_json::to_string(&inst.doc).unwrap()).unwrap();
        assert_eq!(again, inst.doc);
        assert_eq!(inst.dists().unwrap()[0].mean(), 0.5);
    }
}
