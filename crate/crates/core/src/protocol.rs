//! Wire format spoken with the agent: prompt assembly, plan parsing,
//! chunk truncation and the rolling feedback history.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{decode_action, ActionDecodeError, LowLevelAction, ACTION_LEN};
use crate::skills::{schema_json, validate_call, SchemaError, SkillCall, SkillName};
use crate::tasks::{assistant_info, fill, TaskSpec, Templates, Tier};
use crate::world::{ArmTag, SceneState};

/// Steps kept in the feedback history.
pub const HISTORY_LEN: usize = 3;
pub const HISTORY_HEADER: &str = "The 3-steps action history:\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFailureKind {
    MalformedStructure,
    MissingField,
    WrongArity,
    UnknownAction,
    BadParameter,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{detail}")]
pub struct ParseFailure {
    pub kind: ParseFailureKind,
    pub detail: String,
}

impl ParseFailure {
    fn new(kind: ParseFailureKind, detail: impl Into<String>) -> Self {
        ParseFailure { kind, detail: detail.into() }
    }
}

/// Input quirks that were tolerated while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leniency {
    CodeFence,
    StringEncodedPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAssignment {
    pub object: String,
    pub use_arm: ArmTag,
}

/// One tier-3 action as written by the agent, with its decoded values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAction {
    pub raw: String,
    pub values: Vec<f64>,
}

impl RawAction {
    pub fn action(&self) -> LowLevelAction {
        decode_action(&self.values).expect("validated at parse time")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "tier", content = "entries")]
pub enum ExecutablePlan {
    Spatial(Vec<SpatialAssignment>),
    Skills(Vec<SkillCall>),
    Actions(Vec<RawAction>),
}

impl ExecutablePlan {
    pub fn len(&self) -> usize {
        match self {
            ExecutablePlan::Spatial(v) => v.len(),
            ExecutablePlan::Skills(v) => v.len(),
            ExecutablePlan::Actions(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub visual_state_description: String,
    pub reasoning_and_reflection: String,
    pub language_plan: String,
    pub executable_plan: ExecutablePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPlan {
    pub record: PlanRecord,
    pub leniency: Vec<Leniency>,
}

fn strip_fence(raw: &str) -> (&str, bool) {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return (t, false) };
    let Some(body) = rest.strip_suffix("```") else { return (t, false) };
    // Drop a language tag such as ```json on the opening line.
    let body = match body.find('\n') {
        Some(i) if body[..i].chars().all(|c| c.is_ascii_alphanumeric()) => &body[i + 1..],
        _ => body,
    };
    (body.trim(), true)
}

fn parse_object(raw: &str) -> Result<(Map<String, Value>, Vec<Leniency>), ParseFailure> {
    let (body, fenced) = strip_fence(raw);
    let v: Value = serde_json::from_str(body)
        .map_err(|e| ParseFailure::new(ParseFailureKind::MalformedStructure, format!("output is not valid JSON: {e}")))?;
    let Value::Object(map) = v else {
        return Err(ParseFailure::new(ParseFailureKind::MalformedStructure, "output must be a single JSON object"));
    };
    Ok((map, if fenced { vec![Leniency::CodeFence] } else { Vec::new() }))
}

fn string_field(map: &Map<String, Value>, key: &str) -> Result<String, ParseFailure> {
    match map.get(key) {
        None => Err(ParseFailure::new(ParseFailureKind::MissingField, format!("missing field `{key}`"))),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseFailure::new(ParseFailureKind::MalformedStructure, format!("field `{key}` must be a string"))),
    }
}

fn plan_array(map: &Map<String, Value>, lenient: &mut Vec<Leniency>) -> Result<Vec<Value>, ParseFailure> {
    match map.get("executable_plan") {
        None => Err(ParseFailure::new(ParseFailureKind::MissingField, "missing field `executable_plan`")),
        Some(Value::Array(a)) => Ok(a.clone()),
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Array(a)) => {
                lenient.push(Leniency::StringEncodedPlan);
                Ok(a)
            }
            _ => Err(ParseFailure::new(ParseFailureKind::MalformedStructure, "`executable_plan` must be a list")),
        },
        Some(_) => Err(ParseFailure::new(ParseFailureKind::MalformedStructure, "`executable_plan` must be a list")),
    }
}

fn parse_skill(i: usize, v: &Value) -> Result<SkillCall, ParseFailure> {
    use ParseFailureKind::*;
    let Value::Object(m) = v else {
        return Err(ParseFailure::new(MalformedStructure, format!("plan entry {i} must be an object")));
    };
    for key in ["action_id", "action_name", "parameters"] {
        if !m.contains_key(key) {
            return Err(ParseFailure::new(MissingField, format!("plan entry {i} is missing `{key}`")));
        }
    }
    let (Some(id), Some(name)) = (m["action_id"].as_str(), m["action_name"].as_str()) else {
        return Err(ParseFailure::new(MalformedStructure, format!("plan entry {i}: action_id and action_name must be strings")));
    };
    let Value::Object(params) = &m["parameters"] else {
        return Err(ParseFailure::new(MalformedStructure, format!("plan entry {i}: parameters must be an object")));
    };
    let Some(skill) = SkillName::parse(name) else {
        return Err(ParseFailure::new(UnknownAction, format!("plan entry {i}: unknown action `{name}`")));
    };
    let call = SkillCall { action_id: id.to_string(), action_name: skill, parameters: params.clone() };
    validate_call(&call).map_err(|e: SchemaError| ParseFailure::new(BadParameter, format!("plan entry {i}: {e}")))?;
    Ok(call)
}

fn plain_decimal(tok: &str) -> bool {
    let t = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], Some(&t[i + 1..])),
        None => (t, None),
    };
    let mut parts = mant.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    let mant_ok = digits(int) && frac.is_none_or(digits) && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    let exp_ok = exp.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && digits(e)
    });
    mant_ok && exp_ok
}

fn check_values(i: usize, values: Vec<f64>, raw: String) -> Result<RawAction, ParseFailure> {
    use ParseFailureKind::*;
    match decode_action(&values) {
        Ok(_) => Ok(RawAction { raw, values }),
        Err(ActionDecodeError::WrongArity(n)) => {
            Err(ParseFailure::new(WrongArity, format!("action {i} has {n} numbers, expected {ACTION_LEN}")))
        }
        Err(ActionDecodeError::NonFinite(j)) => {
            Err(ParseFailure::new(MalformedStructure, format!("action {i}: value {j} is not a finite number")))
        }
        Err(ActionDecodeError::NonNormalizable { arm }) => {
            Err(ParseFailure::new(BadParameter, format!("action {i}: the {arm} quaternion has zero length")))
        }
    }
}

fn parse_vector(i: usize, v: &Value) -> Result<RawAction, ParseFailure> {
    use ParseFailureKind::*;
    match v {
        Value::String(s) => {
            let t = s.trim();
            let Some(inner) = t.strip_prefix('[').and_then(|t| t.strip_suffix(']')) else {
                return Err(ParseFailure::new(MalformedStructure, format!("action {i} must be a bracketed list of numbers")));
            };
            let mut values = Vec::new();
            if !inner.trim().is_empty() {
                for tok in inner.split(',') {
                    let tok = tok.trim();
                    if !plain_decimal(tok) {
                        return Err(ParseFailure::new(BadParameter, format!("action {i}: `{tok}` is not a plain number")));
                    }
                    values.push(tok.parse::<f64>().map_err(|_| ParseFailure::new(BadParameter, format!("action {i}: `{tok}` is not a plain number")))?);
                }
            }
            check_values(i, values, s.clone())
        }
        Value::Array(a) => {
            let values: Option<Vec<f64>> = a.iter().map(Value::as_f64).collect();
            let Some(values) = values else {
                return Err(ParseFailure::new(BadParameter, format!("action {i} must contain only numbers")));
            };
            check_values(i, values, Value::Array(a.clone()).to_string())
        }
        _ => Err(ParseFailure::new(MalformedStructure, format!("action {i} must be a string or a list"))),
    }
}

fn lower_keys(map: &Map<String, Value>) -> Map<String, Value> {
    map.iter().map(|(k, v)| (k.to_lowercase(), v.clone())).collect()
}

fn parse_results(map: &Map<String, Value>) -> Result<Vec<SpatialAssignment>, ParseFailure> {
    use ParseFailureKind::*;
    let map = lower_keys(map);
    let Some(results) = map.get("results") else {
        return Err(ParseFailure::new(MissingField, "missing field `results`"));
    };
    let Value::Array(items) = results else {
        return Err(ParseFailure::new(MalformedStructure, "`results` must be a list"));
    };
    let mut out: Vec<SpatialAssignment> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let Value::Object(m) = item else {
            return Err(ParseFailure::new(MalformedStructure, format!("results entry {i} must be an object")));
        };
        let m = lower_keys(m);
        let object = match m.get("object") {
            None => return Err(ParseFailure::new(MissingField, format!("results entry {i} is missing `object`"))),
            Some(Value::String(s)) => s.trim().to_string(),
            Some(_) => return Err(ParseFailure::new(MalformedStructure, format!("results entry {i}: `object` must be a string"))),
        };
        let arm = match m.get("use_arm") {
            None => return Err(ParseFailure::new(MissingField, format!("results entry {i} is missing `use_arm`"))),
            Some(Value::String(s)) => ArmTag::parse(&s.trim().to_lowercase())
                .ok_or_else(|| ParseFailure::new(BadParameter, format!("results entry {i}: arm `{s}` is not left or right")))?,
            Some(_) => return Err(ParseFailure::new(MalformedStructure, format!("results entry {i}: `use_arm` must be a string"))),
        };
        if out.iter().any(|a| a.object == object) {
            return Err(ParseFailure::new(BadParameter, format!("`{object}` is listed more than once")));
        }
        out.push(SpatialAssignment { object, use_arm: arm });
    }
    Ok(out)
}

/// Parses one agent reply for the given tier. Never panics.
pub fn parse_plan(raw: &str, tier: Tier) -> Result<ParsedPlan, ParseFailure> {
    let (map, mut leniency) = parse_object(raw)?;
    if tier == Tier::Spatial {
        let lower = lower_keys(&map);
        let visual = match lower.get("visual_state_description") {
            Some(Value::String(s)) => s.clone(),
            _ => String::new(),
        };
        let results = parse_results(&map)?;
        let record = PlanRecord {
            visual_state_description: visual,
            reasoning_and_reflection: String::new(),
            language_plan: String::new(),
            executable_plan: ExecutablePlan::Spatial(results),
        };
        return Ok(ParsedPlan { record, leniency });
    }
    let visual = string_field(&map, "visual_state_description")?;
    let reasoning = string_field(&map, "reasoning_and_reflection")?;
    let language = string_field(&map, "language_plan")?;
    let entries = plan_array(&map, &mut leniency)?;
    let plan = if tier == Tier::HighLevel {
        ExecutablePlan::Skills(entries.iter().enumerate().map(|(i, v)| parse_skill(i, v)).collect::<Result<_, _>>()?)
    } else {
        ExecutablePlan::Actions(entries.iter().enumerate().map(|(i, v)| parse_vector(i, v)).collect::<Result<_, _>>()?)
    };
    let record = PlanRecord {
        visual_state_description: visual,
        reasoning_and_reflection: reasoning,
        language_plan: language,
        executable_plan: plan,
    };
    Ok(ParsedPlan { record, leniency })
}

/// Tier-1 answer as (object, arm) pairs; every id in `required` must appear.
pub fn parse_spatial_results(raw: &str, required: &[String]) -> Result<Vec<SpatialAssignment>, ParseFailure> {
    let (map, _) = parse_object(raw)?;
    let results = parse_results(&map)?;
    for r in required {
        if !results.iter().any(|a| &a.object == r) {
            return Err(ParseFailure::new(ParseFailureKind::MissingField, format!("no arm given for `{r}`")));
        }
    }
    Ok(results)
}

/// Keeps the first `k` entries and reports how many were dropped.
pub fn truncate_chunk<T: Clone>(plan: &[T], k: usize) -> (Vec<T>, usize) {
    let n = plan.len().min(k);
    (plan[..n].to_vec(), plan.len() - n)
}

/// Serializes a record back to the wire format.
pub fn render_plan(record: &PlanRecord) -> String {
    let plan: Vec<Value> = match &record.executable_plan {
        ExecutablePlan::Spatial(v) => {
            let results: Vec<Value> = v
                .iter()
                .map(|a| serde_json::json!({"object": a.object, "use_arm": a.use_arm.as_str()}))
                .collect();
            return serde_json::json!({
                "visual_state_description": record.visual_state_description,
                "results": results,
            })
            .to_string();
        }
        ExecutablePlan::Skills(v) => v.iter().map(skill_value).collect(),
        ExecutablePlan::Actions(v) => v.iter().map(|a| Value::String(a.raw.clone())).collect(),
    };
    let mut m = Map::new();
    m.insert("visual_state_description".into(), record.visual_state_description.clone().into());
    m.insert("reasoning_and_reflection".into(), record.reasoning_and_reflection.clone().into());
    m.insert("language_plan".into(), record.language_plan.clone().into());
    m.insert("executable_plan".into(), Value::Array(plan));
    Value::Object(m).to_string()
}

pub fn skill_value(c: &SkillCall) -> Value {
    let mut m = Map::new();
    m.insert("action_id".into(), c.action_id.clone().into());
    m.insert("action_name".into(), c.action_name.as_str().into());
    m.insert("parameters".into(), Value::Object(c.parameters.clone()));
    Value::Object(m)
}

/// Python `repr` of a float.
pub fn py_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:e}");
    let (mant, e) = sci.split_once('e').expect("LowerExp always has an exponent");
    let e: i32 = e.parse().expect("integer exponent");
    if !(-4..16).contains(&e) {
        let sign = if e < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", e.abs());
    }
    let s = format!("{x}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Python `repr` of a string.
pub fn py_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Python `repr` of a JSON value, as a dict/list literal.
pub fn py_repr(v: &Value) -> String {
    match v {
        Value::Null => "None".into(),
        Value::Bool(b) => if *b { "True" } else { "False" }.into(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else if let Some(u) = n.as_u64() {
                u.to_string()
            } else {
                py_float(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        Value::String(s) => py_str(s),
        Value::Array(a) => format!("[{}]", a.iter().map(py_repr).collect::<Vec<_>>().join(", ")),
        Value::Object(m) => format!(
            "{{{}}}",
            m.iter().map(|(k, v)| format!("{}: {}", py_str(k), py_repr(v))).collect::<Vec<_>>().join(", ")
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub number: usize,
    /// Each executed entry, already in its rendered form.
    pub actions: Vec<String>,
    pub feedback: Vec<String>,
}

impl HistoryStep {
    pub fn from_skills(number: usize, calls: &[SkillCall], feedback: Vec<String>) -> Self {
        HistoryStep { number, actions: calls.iter().map(|c| py_repr(&skill_value(c))).collect(), feedback }
    }

    pub fn from_actions(number: usize, actions: &[RawAction], feedback: Vec<String>) -> Self {
        HistoryStep { number, actions: actions.iter().map(|a| py_str(&a.raw)).collect(), feedback }
    }

    /// A round whose reply could not be used.
    pub fn failed(number: usize, detail: &str) -> Self {
        HistoryStep { number, actions: Vec::new(), feedback: vec![format!("Action failed: {detail}")] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    steps: VecDeque<HistoryStep>,
}

impl HistoryWindow {
    pub fn push(&mut self, step: HistoryStep) {
        self.steps.push_back(step);
        while self.steps.len() > HISTORY_LEN {
            self.steps.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> impl Iterator<Item = &HistoryStep> {
        self.steps.iter()
    }

    /// The history block, or an empty string when there is nothing yet.
    pub fn render(&self) -> String {
        if self.steps.is_empty() {
            return String::new();
        }
        let mut out = String::from(HISTORY_HEADER);
        for s in &self.steps {
            let _ = write!(
                out,
                "Step {}, actionList [{}], action_feedback:{}\n\n",
                s.number,
                s.actions.join(", "),
                s.feedback.join("\n")
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Names of the images that accompany the text, in order.
    pub attachments: Vec<String>,
}

/// Builds the full prompt for one planning round. Deterministic.
pub fn assemble_prompt(
    task: &TaskSpec,
    state: &SceneState,
    history: &HistoryWindow,
    observations: &[String],
    templates: &Templates,
) -> Prompt {
    let key = task.tier.as_str();
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    vars.insert("task", task.id.clone());
    vars.insert("instruction", task.instruction.clone());
    vars.insert("k", task.max_chunk_size.to_string());
    vars.insert("skills", schema_json().trim_end().to_string());
    let section = |m: &BTreeMap<String, String>| fill(m.get(key).map(String::as_str).unwrap_or(""), &vars);
    let mut text = String::new();
    text.push_str(section(&templates.system).trim_end());
    text.push_str("\n\n");
    text.push_str(&assistant_info(task, state, templates));
    text.push_str("\n\n");
    text.push_str(section(&templates.format).trim_end());
    text.push_str("\n\n");
    let h = history.render();
    if !h.is_empty() {
        text.push_str(&h);
        text.push('\n');
    }
    text.push_str(&fill(templates.closing(), &vars));
    text.push('\n');
    Prompt { text, attachments: observations.to_vec() }
}
