//! The expert decision flowchart: maps the five data elements to a color.
//!
//! Rules fire in strict precedence. A transplant or assist device marks
//! the patient purple regardless of anything else; without a heart
//! failure mention the patient is grey; heart failure flagged as not the
//! active issue is red; active heart failure already seen by cardiology
//! (consult or the Galter 10 unit) is orange; remaining active heart
//! failure is green.

use serde::{Deserialize, Serialize};

use crate::corpus::{ColorLabel, FineLabel};
use crate::extraction::DataElements;

/// Which precedence rule produced the classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FiredRule {
    TransplantRule,
    NoHfRule,
    NonActiveRule,
    ConsultOrGalterRule,
    DefaultGreenRule,
}

/// Classification outcome plus the rule and elements behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub predicted: ColorLabel,
    pub fired_rule: FiredRule,
    pub elements: DataElements,
}

/// Classify one patient's data elements. Pure and total: every element
/// combination maps to exactly one color.
pub fn classify_rules(elements: &DataElements) -> RuleTrace {
    let (fine, fired_rule) = if elements.heart_transplant {
        (FineLabel::Purple, FiredRule::TransplantRule)
    } else if !elements.heart_failure {
        (FineLabel::Grey, FiredRule::NoHfRule)
    } else if elements.non_active_issue {
        (FineLabel::Red, FiredRule::NonActiveRule)
    } else if elements.cardiology_consulted || elements.at_galter_10 {
        (FineLabel::Orange, FiredRule::ConsultOrGalterRule)
    } else {
        (FineLabel::Green, FiredRule::DefaultGreenRule)
    };
    RuleTrace {
        predicted: ColorLabel::from_fine(fine),
        fired_rule,
        elements: elements.clone(),
    }
}
