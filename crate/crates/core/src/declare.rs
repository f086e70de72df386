//! DECLARE templates, activation counting and four-valued monitoring states.
//!
//! Each template is evaluated on a trace by counting activations,
//! fulfillments, violations and pending activations, then mapping those
//! counts to a runtime-verification state. The LTLf formula of each template
//! is also available ([`Template::formula`]) and serves as the independent
//! reference for the counting code on complete traces.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ltlf::Formula;

/// Template groups: existence, choice, positive relations, negative relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    E,
    C,
    PR,
    NR,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::E, Family::C, Family::PR, Family::NR];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::E => "E",
            Family::C => "C",
            Family::PR => "PR",
            Family::NR => "NR",
        };
        f.write_str(s)
    }
}

/// A DECLARE template. The existence-family counts are carried inline;
/// `Absence(m)` means "at most `m - 1` occurrences".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Template {
    Existence(u32),
    Absence(u32),
    Exactly(u32),
    Init,
    Choice,
    ExclusiveChoice,
    RespondedExistence,
    Response,
    AlternateResponse,
    ChainResponse,
    Precedence,
    AlternatePrecedence,
    ChainPrecedence,
    NotRespondedExistence,
    NotResponse,
    NotPrecedence,
    NotChainResponse,
    NotChainPrecedence,
}

/// The fourteen binary templates, in canonical order.
pub const BINARY_TEMPLATES: [Template; 14] = [
    Template::Choice,
    Template::ExclusiveChoice,
    Template::RespondedExistence,
    Template::Response,
    Template::AlternateResponse,
    Template::ChainResponse,
    Template::Precedence,
    Template::AlternatePrecedence,
    Template::ChainPrecedence,
    Template::NotRespondedExistence,
    Template::NotResponse,
    Template::NotPrecedence,
    Template::NotChainResponse,
    Template::NotChainPrecedence,
];

impl Template {
    /// The four unary templates instantiated with existence count `n`
    /// (absence uses `n + 1`).
    pub fn unary(n: u32) -> [Template; 4] {
        [Template::Existence(n), Template::Absence(n + 1), Template::Exactly(n), Template::Init]
    }

    /// Templates of a family, in canonical order.
    pub fn of_family(family: Family, existence_ns: &[u32]) -> Vec<Template> {
        match family {
            Family::E => {
                // all existence(n) first, then absence, exactly, init
                let mut out = Vec::new();
                for slot in 0..3 {
                    for &n in existence_ns {
                        out.push(Template::unary(n)[slot]);
                    }
                }
                out.push(Template::Init);
                out
            }
            _ => BINARY_TEMPLATES.iter().copied().filter(|t| t.family() == family).collect(),
        }
    }

    pub fn family(self) -> Family {
        use Template::*;
        match self {
            Existence(_) | Absence(_) | Exactly(_) | Init => Family::E,
            Choice | ExclusiveChoice => Family::C,
            RespondedExistence | Response | AlternateResponse | ChainResponse | Precedence
            | AlternatePrecedence | ChainPrecedence => Family::PR,
            NotRespondedExistence | NotResponse | NotPrecedence | NotChainResponse | NotChainPrecedence => {
                Family::NR
            }
        }
    }

    pub fn arity(self) -> usize {
        if self.family() == Family::E {
            1
        } else {
            2
        }
    }

    pub fn n(self) -> Option<u32> {
        match self {
            Template::Existence(n) | Template::Absence(n) | Template::Exactly(n) => Some(n),
            _ => None,
        }
    }

    /// Position in the canonical template order, used for sorting.
    pub fn rank(self) -> usize {
        use Template::*;
        match self {
            Existence(_) => 0,
            Absence(_) => 1,
            Exactly(_) => 2,
            Init => 3,
            other => 4 + BINARY_TEMPLATES.iter().position(|t| *t == other).unwrap_or(0),
        }
    }

    pub fn name(self) -> &'static str {
        use Template::*;
        match self {
            Existence(_) => "existence",
            Absence(_) => "absence",
            Exactly(_) => "exactly",
            Init => "init",
            Choice => "choice",
            ExclusiveChoice => "exclusive choice",
            RespondedExistence => "responded existence",
            Response => "response",
            AlternateResponse => "alternate response",
            ChainResponse => "chain response",
            Precedence => "precedence",
            AlternatePrecedence => "alternate precedence",
            ChainPrecedence => "chain precedence",
            NotRespondedExistence => "not responded existence",
            NotResponse => "not response",
            NotPrecedence => "not precedence",
            NotChainResponse => "not chain response",
            NotChainPrecedence => "not chain precedence",
        }
    }

    fn from_name(name: &str, n: Option<u32>) -> Option<Template> {
        use Template::*;
        let t = match name {
            "existence" => Existence(n.unwrap_or(1)),
            "absence" => Absence(n.unwrap_or(2)),
            "exactly" => Exactly(n.unwrap_or(1)),
            "init" => Init,
            _ => *BINARY_TEMPLATES.iter().find(|t| t.name() == name)?,
        };
        Some(t)
    }

    /// The LTLf formula of the template instantiated with `a` (activation)
    /// and `b` (target; ignored for unary templates).
    pub fn formula(self, a: &str, b: &str) -> Formula {
        use Template::*;
        let fa = || Formula::atom(a);
        let fb = || Formula::atom(b);
        let not_b_until_a = || Formula::until(Formula::not(fb()), fa());
        let never_b = || Formula::globally(Formula::not(fb()));
        match self {
            Existence(n) => existence_formula(n, a),
            Absence(m) => Formula::not(existence_formula(m, a)),
            Exactly(n) => Formula::and(existence_formula(n, a), Formula::not(existence_formula(n + 1, a))),
            Init => fa(),
            Choice => Formula::or(Formula::finally(fa()), Formula::finally(fb())),
            ExclusiveChoice => Formula::or(
                Formula::and(Formula::finally(fa()), Formula::not(Formula::finally(fb()))),
                Formula::and(Formula::not(Formula::finally(fa())), Formula::finally(fb())),
            ),
            RespondedExistence => Formula::implies(Formula::finally(fa()), Formula::finally(fb())),
            Response => Formula::globally(Formula::implies(fa(), Formula::finally(fb()))),
            AlternateResponse => Formula::globally(Formula::implies(
                fa(),
                Formula::next(Formula::until(Formula::not(fa()), fb())),
            )),
            ChainResponse => Formula::globally(Formula::implies(fa(), Formula::next(fb()))),
            Precedence => Formula::or(not_b_until_a(), never_b()),
            AlternatePrecedence => Formula::and(
                not_b_until_a(),
                Formula::globally(Formula::implies(
                    fb(),
                    Formula::next(Formula::or(not_b_until_a(), never_b())),
                )),
            ),
            ChainPrecedence => Formula::globally(Formula::implies(Formula::next(fb()), fa())),
            NotRespondedExistence => {
                Formula::implies(Formula::finally(fa()), Formula::not(Formula::finally(fb())))
            }
            NotResponse => Formula::globally(Formula::implies(fa(), Formula::not(Formula::finally(fb())))),
            NotPrecedence => Formula::globally(Formula::implies(Formula::finally(fb()), Formula::not(fa()))),
            NotChainResponse => Formula::globally(Formula::implies(fa(), Formula::next(Formula::not(fb())))),
            NotChainPrecedence => {
                Formula::globally(Formula::implies(Formula::next(fb()), Formula::not(fa())))
            }
        }
    }
}

/// `existence(1, a) = F a`, `existence(n, a) = F(a && X existence(n-1, a))`.
fn existence_formula(n: u32, a: &str) -> Formula {
    if n == 0 {
        return Formula::True;
    }
    let mut f = Formula::finally(Formula::atom(a));
    for _ in 1..n {
        f = Formula::finally(Formula::and(Formula::atom(a), Formula::next(f)));
    }
    f
}

/// Four-valued runtime-verification state with its feature code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum RvState {
    Violated = 0,
    Satisfied = 1,
    PossiblyViolated = 2,
    PossiblySatisfied = 3,
}

impl RvState {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<RvState> {
        match code {
            0 => Some(RvState::Violated),
            1 => Some(RvState::Satisfied),
            2 => Some(RvState::PossiblyViolated),
            3 => Some(RvState::PossiblySatisfied),
            _ => None,
        }
    }

    /// Permanently decided (cannot change on extension).
    pub fn is_final(self) -> bool {
        matches!(self, RvState::Violated | RvState::Satisfied)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub activations: usize,
    pub fulfillments: usize,
    pub violations: usize,
    pub pendings: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeclareError {
    #[error("no criteria row matches {stats:?} for {template}")]
    InvalidStats { template: String, stats: ActivationStats },
    #[error("template {0} takes {1} activities")]
    Arity(String, usize),
    #[error("activation and target must differ (got {0:?})")]
    RepeatedActivity(String),
    #[error("cannot parse constraint {0:?}")]
    Parse(String),
}

/// Counts activations, fulfillments, violations and pendings of a template
/// on `trace`. `target` is ignored by unary templates; a binary template
/// without target treats the target as never occurring.
///
/// With `done = true`, activations still unresolved at the end of the trace
/// are recorded as violations rather than pendings.
pub fn count_stats<T: PartialEq>(
    template: Template,
    activation: &T,
    target: Option<&T>,
    trace: &[T],
    done: bool,
) -> ActivationStats {
    use Template::*;
    let is_a = |e: &T| e == activation;
    let is_b = |e: &T| target.is_some_and(|t| e == t);
    let n = trace.len();
    let mut s = ActivationStats { done, ..Default::default() };

    // resolve an open activation at the end of the trace
    let unresolved = |s: &mut ActivationStats| {
        if done {
            s.violations += 1;
        } else {
            s.pendings += 1;
        }
    };

    match template {
        Existence(_) | Exactly(_) => {
            let count = trace.iter().filter(|e| is_a(e)).count();
            s.activations = count;
            s.fulfillments = count;
        }
        Absence(m) => {
            let allowed = m.saturating_sub(1) as usize;
            let count = trace.iter().filter(|e| is_a(e)).count();
            s.activations = count;
            s.fulfillments = count.min(allowed);
            s.violations = count.saturating_sub(allowed);
        }
        Init => {
            if let Some(first) = trace.first() {
                s.activations = 1;
                if is_a(first) {
                    s.fulfillments = 1;
                } else {
                    s.violations = 1;
                }
            }
        }
        Choice => {
            let count = trace.iter().filter(|e| is_a(e) || is_b(e)).count();
            s.activations = count;
            s.fulfillments = count;
        }
        ExclusiveChoice => {
            let has_a = trace.iter().any(&is_a);
            let has_b = trace.iter().any(&is_b);
            s.activations = trace.iter().filter(|e| is_a(e) || is_b(e)).count();
            if has_a && has_b {
                s.violations = 1;
            } else {
                s.fulfillments = s.activations;
            }
        }
        RespondedExistence => {
            let has_b = trace.iter().any(&is_b);
            for e in trace {
                if is_a(e) {
                    s.activations += 1;
                    if has_b {
                        s.fulfillments += 1;
                    } else {
                        unresolved(&mut s);
                    }
                }
            }
        }
        Response => {
            // walk backwards remembering whether a target lies ahead
            let mut b_ahead = false;
            for e in trace.iter().rev() {
                if is_b(e) {
                    b_ahead = true;
                } else if is_a(e) {
                    s.activations += 1;
                    if b_ahead {
                        s.fulfillments += 1;
                    } else {
                        unresolved(&mut s);
                    }
                }
            }
        }
        AlternateResponse => {
            // the next activation or target after each activation decides it
            let mut open = false;
            for e in trace {
                if is_a(e) {
                    s.activations += 1;
                    if open {
                        s.violations += 1;
                    }
                    open = true;
                } else if is_b(e) && open {
                    s.fulfillments += 1;
                    open = false;
                }
            }
            if open {
                unresolved(&mut s);
            }
        }
        ChainResponse => {
            for (i, e) in trace.iter().enumerate() {
                if is_a(e) {
                    s.activations += 1;
                    match trace.get(i + 1) {
                        Some(next) if is_b(next) => s.fulfillments += 1,
                        Some(_) => s.violations += 1,
                        None => unresolved(&mut s),
                    }
                }
            }
        }
        Precedence => {
            let mut seen_a = false;
            for e in trace {
                if is_a(e) {
                    seen_a = true;
                } else if is_b(e) {
                    s.activations += 1;
                    if seen_a {
                        s.fulfillments += 1;
                    } else {
                        s.violations += 1;
                    }
                }
            }
        }
        AlternatePrecedence => {
            // (!B U A) && G(B -> X((!B U A) || G !B)), X being strong next.
            // Each B is decided by the next A or B after it.
            let mut seen_a = false;
            let mut open: Option<bool> = None;
            for (i, e) in trace.iter().enumerate() {
                if is_a(e) {
                    seen_a = true;
                    match open.take() {
                        Some(true) => s.violations += 1,
                        Some(false) => s.fulfillments += 1,
                        None => {}
                    }
                } else if is_b(e) {
                    s.activations += 1;
                    if open.take().is_some() {
                        s.violations += 1;
                    }
                    // no A yet, or no successor position for the next-operator
                    open = Some(!seen_a || (i + 1 == n && done));
                }
            }
            match open {
                Some(true) => s.violations += 1,
                // no further B: G !B discharges it
                Some(false) => s.fulfillments += 1,
                None => {}
            }
            if done && !seen_a && s.activations == 0 {
                // the leading (!B U A) needs an A to occur at all
                s.violations += 1;
            }
        }
        ChainPrecedence => {
            for i in 1..n {
                if is_b(&trace[i]) {
                    s.activations += 1;
                    if is_a(&trace[i - 1]) {
                        s.fulfillments += 1;
                    } else {
                        s.violations += 1;
                    }
                }
            }
        }
        NotRespondedExistence => {
            let has_b = trace.iter().any(&is_b);
            for e in trace {
                if is_a(e) {
                    s.activations += 1;
                    if has_b {
                        s.violations += 1;
                    } else {
                        s.fulfillments += 1;
                    }
                }
            }
        }
        NotResponse | NotPrecedence => {
            let mut b_ahead = false;
            for e in trace.iter().rev() {
                if is_b(e) {
                    b_ahead = true;
                } else if is_a(e) {
                    s.activations += 1;
                    if b_ahead {
                        s.violations += 1;
                    } else {
                        s.fulfillments += 1;
                    }
                }
            }
        }
        NotChainResponse => {
            for (i, e) in trace.iter().enumerate() {
                if is_a(e) {
                    s.activations += 1;
                    match trace.get(i + 1) {
                        Some(next) if is_b(next) => s.violations += 1,
                        Some(_) => s.fulfillments += 1,
                        // X !B has no successor to hold at
                        None if done => s.violations += 1,
                        None => {}
                    }
                }
            }
        }
        NotChainPrecedence => {
            for i in 1..n {
                if is_b(&trace[i]) {
                    s.activations += 1;
                    if is_a(&trace[i - 1]) {
                        s.violations += 1;
                    } else {
                        s.fulfillments += 1;
                    }
                }
            }
        }
    }
    s
}

/// Maps counts to a monitoring state following the per-template criteria.
pub fn rv_state(template: Template, stats: &ActivationStats) -> Result<RvState, DeclareError> {
    use RvState::*;
    use Template::*;
    let ActivationStats { activations: a, violations: v, pendings: p, done, .. } = *stats;
    let state = match template {
        // unresolved activations are pendings before the end and violations after
        Response | RespondedExistence => match (done, p + v > 0) {
            (false, true) => Some(PossiblyViolated),
            (false, false) => Some(PossiblySatisfied),
            (true, true) => Some(Violated),
            (true, false) => Some(Satisfied),
        },
        NotResponse
        | NotChainResponse
        | Precedence
        | NotPrecedence
        | Absence(_)
        | ChainPrecedence
        | NotChainPrecedence
        | AlternatePrecedence
        | NotRespondedExistence => {
            if v > 0 {
                Some(Violated)
            } else if done {
                Some(Satisfied)
            } else {
                Some(PossiblySatisfied)
            }
        }
        Init => {
            if v > 0 {
                Some(Violated)
            } else if stats.fulfillments > 0 {
                Some(Satisfied)
            } else if a == 0 {
                // empty trace: nothing started with the activity
                Some(if done { Violated } else { PossiblyViolated })
            } else {
                None
            }
        }
        Existence(n) => {
            let n = n as usize;
            if a >= n {
                Some(Satisfied)
            } else if done {
                Some(Violated)
            } else {
                Some(PossiblyViolated)
            }
        }
        Exactly(n) => {
            let n = n as usize;
            if a > n || (done && a < n) {
                Some(Violated)
            } else if done {
                Some(Satisfied)
            } else if a < n {
                Some(PossiblyViolated)
            } else {
                Some(PossiblySatisfied)
            }
        }
        ChainResponse | AlternateResponse => {
            if v > 0 || (done && p > 0) {
                Some(Violated)
            } else if done {
                Some(Satisfied)
            } else if p > 0 {
                Some(PossiblyViolated)
            } else {
                Some(PossiblySatisfied)
            }
        }
        Choice => {
            if a > 0 {
                Some(Satisfied)
            } else if done {
                Some(Violated)
            } else {
                Some(PossiblyViolated)
            }
        }
        ExclusiveChoice => {
            if v > 0 || (done && a == 0) {
                Some(Violated)
            } else if a == 0 {
                Some(PossiblyViolated)
            } else if done {
                Some(Satisfied)
            } else {
                Some(PossiblySatisfied)
            }
        }
    };
    state.ok_or_else(|| DeclareError::InvalidStats { template: template.to_string(), stats: *stats })
}

/// A template instantiated over concrete activities.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub template: Template,
    pub activation: String,
    pub target: Option<String>,
}

impl Constraint {
    pub fn new(
        template: Template,
        activation: impl Into<String>,
        target: Option<String>,
    ) -> Result<Self, DeclareError> {
        let activation = activation.into();
        match (template.arity(), &target) {
            (1, None) => {}
            (2, Some(t)) if *t == activation => {
                return Err(DeclareError::RepeatedActivity(activation));
            }
            (2, Some(_)) => {}
            (arity, _) => return Err(DeclareError::Arity(template.name().to_owned(), arity)),
        }
        Ok(Constraint { template, activation, target })
    }

    pub fn unary(template: Template, activation: impl Into<String>) -> Self {
        Self::new(template, activation, None).expect("unary template")
    }

    pub fn binary(template: Template, activation: impl Into<String>, target: impl Into<String>) -> Self {
        Self::new(template, activation, Some(target.into())).expect("binary template, distinct activities")
    }

    pub fn count_stats<S: AsRef<str>>(&self, trace: &[S], done: bool) -> ActivationStats {
        let names: Vec<&str> = trace.iter().map(|s| s.as_ref()).collect();
        count_stats(self.template, &self.activation.as_str(), self.target.as_deref().as_ref(), &names, done)
    }

    /// Monitoring state of the constraint on `trace`.
    pub fn evaluate<S: AsRef<str>>(&self, trace: &[S], done: bool) -> RvState {
        let stats = self.count_stats(trace, done);
        rv_state(self.template, &stats).expect("counting covers every criteria row")
    }

    /// Whether a complete trace satisfies the constraint.
    pub fn holds_complete<S: AsRef<str>>(&self, trace: &[S]) -> bool {
        self.evaluate(trace, true) == RvState::Satisfied
    }

    pub fn formula(&self) -> Formula {
        self.template.formula(&self.activation, self.target.as_deref().unwrap_or(""))
    }

    /// Sort key: canonical template order, then `n`, then activities.
    pub fn sort_key(&self) -> (usize, u32, &str, &str) {
        (
            self.template.rank(),
            self.template.n().unwrap_or(0),
            self.activation.as_str(),
            self.target.as_deref().unwrap_or(""),
        )
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.n() {
            Some(n) => write!(f, "{}(n={n})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.template.name())?;
        f.write_str("(")?;
        if let Some(n) = self.template.n() {
            write!(f, "n={n}, ")?;
        }
        f.write_str(&self.activation)?;
        if let Some(t) = &self.target {
            write!(f, ", {t}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Constraint {
    type Err = DeclareError;

    /// Parses `template(activation[, target])`, with an optional leading
    /// `n=<count>` argument for the existence family.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DeclareError::Parse(s.to_owned());
        let s_trim = s.trim();
        let open = s_trim.find('(').ok_or_else(bad)?;
        if !s_trim.ends_with(')') {
            return Err(bad());
        }
        let name = s_trim[..open].trim().to_ascii_lowercase();
        let mut inner = s_trim[open + 1..s_trim.len() - 1].trim();
        let mut n = None;
        if let Some(rest) = inner.strip_prefix("n=") {
            let comma = rest.find(',').ok_or_else(bad)?;
            n = Some(rest[..comma].trim().parse::<u32>().map_err(|_| bad())?);
            inner = rest[comma + 1..].trim();
        }
        let template = Template::from_name(&name, n).ok_or_else(bad)?;
        if n.is_some() && template.n().is_none() {
            return Err(bad());
        }
        if template.arity() == 1 {
            if inner.is_empty() {
                return Err(bad());
            }
            Constraint::new(template, inner, None)
        } else {
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            let (a, b) = (a.trim(), b.trim());
            if a.is_empty() || b.is_empty() {
                return Err(bad());
            }
            Constraint::new(template, a, Some(b.to_owned()))
        }
    }
}

impl Serialize for Constraint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Constraint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e: DeclareError| serde::de::Error::custom(format!("{e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split(',').filter(|x| !x.is_empty()).collect()
    }

    fn stats(c: &Constraint, trace: &str, done: bool) -> (usize, usize, usize, usize) {
        let s = c.count_stats(&t(trace), done);
        (s.activations, s.fulfillments, s.violations, s.pendings)
    }

    #[test]
    fn response_counting_examples() {
        let c = Constraint::binary(Template::Response, "a", "b");
        assert_eq!(stats(&c, "a,a,b,c", true), (2, 2, 0, 0));
        assert_eq!(stats(&c, "a,b,c,b", true), (1, 1, 0, 0));
        assert_eq!(stats(&c, "a,b,a,c", true), (2, 1, 1, 0));
        assert_eq!(c.count_stats(&t("a,a,b,a,c"), false).pendings, 1);
    }

    #[test]
    fn criteria_rows() {
        let resp = Constraint::binary(Template::Response, "a", "b");
        assert_eq!(resp.evaluate(&t("a,b"), false), RvState::PossiblySatisfied);
        assert_eq!(resp.evaluate(&t("a,b,a"), false), RvState::PossiblyViolated);
        let ex = Constraint::unary(Template::Existence(1), "a");
        assert_eq!(ex.evaluate(&t("b,c"), false), RvState::PossiblyViolated);
        assert_eq!(ex.evaluate(&t("b,a"), false), RvState::Satisfied);
        let exactly = Constraint::unary(Template::Exactly(1), "a");
        assert_eq!(exactly.evaluate(&t("a,b,a"), false), RvState::Violated);
        assert_eq!(exactly.evaluate(&t("a,b"), false), RvState::PossiblySatisfied);
        assert_eq!(exactly.evaluate(&t("a,b"), true), RvState::Satisfied);
    }

    #[test]
    fn worked_trace_holds_complete() {
        let trace = t("a,b,c,a,b,c,c,a,b");
        assert!(!Constraint::binary(Template::Response, "a", "c").holds_complete(&trace));
        assert!(Constraint::binary(Template::Response, "a", "b").holds_complete(&trace));
    }

    #[test]
    fn vacuous_binary_constraints() {
        let trace = t("x,y,z");
        for tpl in BINARY_TEMPLATES {
            if matches!(tpl, Template::Choice | Template::ExclusiveChoice | Template::AlternatePrecedence) {
                continue;
            }
            assert!(Constraint::binary(tpl, "a", "b").holds_complete(&trace), "{tpl}");
        }
    }

    #[test]
    fn init_on_empty_trace() {
        let c = Constraint::unary(Template::Init, "a");
        let empty: Vec<&str> = Vec::new();
        assert_eq!(c.evaluate(&empty, true), RvState::Violated);
        assert_eq!(c.evaluate(&empty, false), RvState::PossiblyViolated);
        assert_eq!(c.evaluate(&t("a"), false), RvState::Satisfied);
    }

    #[test]
    fn codes_are_fixed() {
        assert_eq!(RvState::Violated.code(), 0);
        assert_eq!(RvState::Satisfied.code(), 1);
        assert_eq!(RvState::PossiblyViolated.code(), 2);
        assert_eq!(RvState::PossiblySatisfied.code(), 3);
        for c in 0..4 {
            assert_eq!(RvState::from_code(c).unwrap().code(), c);
        }
        assert_eq!(RvState::from_code(4), None);
    }

    #[test]
    fn textual_form() {
        let c: Constraint = "existence(n=1, ER Triage)".parse().unwrap();
        assert_eq!(c, Constraint::unary(Template::Existence(1), "ER Triage"));
        assert_eq!(c.to_string(), "existence(n=1, ER Triage)");
        let r: Constraint = "chain response(IV Liquid, IV Antibiotics)".parse().unwrap();
        assert_eq!(r.template, Template::ChainResponse);
        assert_eq!(r.target.as_deref(), Some("IV Antibiotics"));
        assert_eq!(r.to_string().parse::<Constraint>().unwrap(), r);
        let bare: Constraint = "exactly(CRP)".parse().unwrap();
        assert_eq!(bare.template, Template::Exactly(1));
        assert!("response(a)".parse::<Constraint>().is_err());
        assert!("response(a, a)".parse::<Constraint>().is_err());
        assert!("frobnicate(a)".parse::<Constraint>().is_err());
        assert!("init(n=2, a)".parse::<Constraint>().is_err());
        assert!(Constraint::new(Template::Init, "a", Some("b".into())).is_err());
    }

    #[test]
    fn families_and_ordering() {
        assert_eq!(Template::of_family(Family::E, &[1]).len(), 4);
        assert_eq!(Template::of_family(Family::C, &[1]).len(), 2);
        assert_eq!(Template::of_family(Family::PR, &[1]).len(), 7);
        assert_eq!(Template::of_family(Family::NR, &[1]).len(), 5);
        let ranks: Vec<usize> = BINARY_TEMPLATES.iter().map(|t| t.rank()).collect();
        assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    }
}
