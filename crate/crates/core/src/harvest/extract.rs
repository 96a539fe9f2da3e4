//! Declarative extraction of opinion records from HTML.
//!
//! Rules are plain data (CSS selectors plus field mappings) supplied in a
//! config file, keeping the pipeline free of site-specific code. Extraction
//! is deterministic: the same bytes and rules yield the same record list.

use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};

use crate::corpus::OpinionShare;

use super::{CachedDocument, HarvestError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NumberFormat {
    /// `"63%"` or `"63"` meaning 63 out of 100.
    #[default]
    Percent,
    /// `"0.63"` as-is.
    Fraction,
}

/// Which OpinionShare field a selector feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareField {
    GroupId,
    YesFraction,
    RespondentCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldRule {
    pub selector: String,
    pub field: ShareField,
    #[serde(default)]
    pub format: NumberFormat,
}

/// One record-shape description: a row selector plus per-field selectors
/// evaluated inside each row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub topic_id: String,
    pub row_selector: String,
    pub fields: Vec<FieldRule>,
}

impl ExtractionRule {
    /// Selector syntax and field coverage checks.
    pub fn validate(&self) -> Result<(), HarvestError> {
        Selector::parse(&self.row_selector).map_err(|e| {
            HarvestError::Config(format!("bad row selector {:?}: {e}", self.row_selector))
        })?;
        let mut has_group = false;
        let mut has_fraction = false;
        for field in &self.fields {
            Selector::parse(&field.selector).map_err(|e| {
                HarvestError::Config(format!("bad field selector {:?}: {e}", field.selector))
            })?;
            match field.field {
                ShareField::GroupId => has_group = true,
                ShareField::YesFraction => has_fraction = true,
                ShareField::RespondentCount => {}
            }
        }
        if !has_group || !has_fraction {
            return Err(HarvestError::Config(format!(
                "rule for topic {:?} must map both group_id and yes_fraction",
                self.topic_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Extraction {
    pub shares: Vec<OpinionShare>,
    /// Non-fatal findings, e.g. selectors that matched nothing.
    pub warnings: Vec<String>,
}

fn cell_text(row: ElementRef<'_>, selector: &Selector) -> Option<String> {
    row.select(selector)
        .next()
        .map(|el| el.text().collect::<String>().trim().to_owned())
}

fn parse_fraction(text: &str, format: NumberFormat, selector: &str) -> Result<f64, HarvestError> {
    let trimmed = text.trim();
    let (digits, divide) = match format {
        NumberFormat::Percent => (trimmed.trim_end_matches('%').trim(), true),
        NumberFormat::Fraction => (trimmed, false),
    };
    let value: f64 = digits.parse().map_err(|_| HarvestError::FieldParse {
        selector: selector.to_owned(),
        message: format!("cell text {text:?} is not numeric"),
    })?;
    let fraction = if divide { value / 100.0 } else { value };
    if !(0.0..=1.0).contains(&fraction) {
        return Err(HarvestError::FieldParse {
            selector: selector.to_owned(),
            message: format!("parsed fraction {fraction} outside [0, 1]"),
        });
    }
    Ok(fraction)
}

/// Apply extraction rules to a fetched document.
///
/// One record per matched row; unparseable cells raise a
/// [`HarvestError::FieldParse`] naming the selector rather than being
/// dropped.
pub fn extract(
    doc: &CachedDocument,
    rules: &[ExtractionRule],
) -> Result<Extraction, HarvestError> {
    let text = doc.body_text()?;
    let html = Html::parse_document(text);
    let mut outcome = Extraction::default();

    for rule in rules {
        rule.validate()?;
        let row_selector = Selector::parse(&rule.row_selector).expect("validated above");
        let mut matched = 0usize;
        for row in html.select(&row_selector) {
            matched += 1;
            let mut group_id: Option<String> = None;
            let mut yes_fraction: Option<f64> = None;
            let mut respondent_count: Option<u64> = None;
            for field in &rule.fields {
                let selector = Selector::parse(&field.selector).expect("validated above");
                let cell = cell_text(row, &selector).ok_or_else(|| HarvestError::FieldParse {
                    selector: field.selector.clone(),
                    message: "no element matched inside row".to_owned(),
                })?;
                match field.field {
                    ShareField::GroupId => {
                        if cell.is_empty() {
                            return Err(HarvestError::FieldParse {
                                selector: field.selector.clone(),
                                message: "empty group id cell".to_owned(),
                            });
                        }
                        group_id = Some(cell);
                    }
                    ShareField::YesFraction => {
                        yes_fraction = Some(parse_fraction(&cell, field.format, &field.selector)?);
                    }
                    ShareField::RespondentCount => {
                        let digits: String =
                            cell.chars().filter(|c| c.is_ascii_digit()).collect();
                        let count =
                            digits.parse::<u64>().map_err(|_| HarvestError::FieldParse {
                                selector: field.selector.clone(),
                                message: format!("cell text {cell:?} is not a count"),
                            })?;
                        respondent_count = Some(count);
                    }
                }
            }
            outcome.shares.push(OpinionShare {
                topic_id: rule.topic_id.clone(),
                group_id: group_id.expect("group_id mapping enforced by validate"),
                yes_fraction: yes_fraction.expect("yes_fraction mapping enforced by validate"),
                respondent_count,
            });
        }
        if matched == 0 {
            outcome.warnings.push(format!(
                "row selector {:?} matched nothing for topic {:?}",
                rule.row_selector, rule.topic_id
            ));
        }
    }
    Ok(outcome)
}
