//! Parser for the community POMDP text format.
//!
//! Supported surface: `discount:`/`values:`/`states:`/`actions:`/
//! `observations:` headers (counts or name lists), an optional `start:` line
//! (probability row, state name or index, `uniform`, or
//! `start include:`/`start exclude:` lists), and `T:`/`O:`/`R:` entries in
//! scalar, row and matrix forms with `uniform`/`identity` keywords and `*`
//! wildcards. Comments run from `#` to end of line.
//!
//! Successor/observation-dependent rewards `R: a : s : s' : z v` are
//! marginalised to `R(s, a)` by expectation under the transition and
//! observation models. With `values: cost` entries are negated so the
//! in-memory model always maximises reward. Later entries overwrite earlier
//! ones, matching common solver behaviour.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pomdp::{Belief, Pomdp, STOCHASTIC_TOL};

/// Rows whose sum is off by at most this much are renormalised when
/// `renormalise` is on (benchmark files carry rounded probabilities).
const RENORM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Renormalise near-stochastic rows instead of rejecting them.
    pub renormalise: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { renormalise: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    line: usize,
}

fn tokenize(src: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, raw_line) in src.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        };
        for word in stripped.split_whitespace() {
            // Split colons off so "T:" and "start:" tokenize uniformly.
            let mut rest = word;
            while let Some(p) = rest.find(':') {
                if p > 0 {
                    out.push(Token {
                        text: rest[..p].to_string(),
                        line,
                    });
                }
                out.push(Token {
                    text: ":".to_string(),
                    line,
                });
                rest = &rest[p + 1..];
            }
            if !rest.is_empty() {
                out.push(Token {
                    text: rest.to_string(),
                    line,
                });
            }
        }
    }
    out
}

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, text: &str) -> Result<Token> {
        match self.next() {
            Some(t) if t.text == text => Ok(t),
            Some(t) => Err(Error::Parse {
                line: t.line,
                msg: format!("expected `{text}`, found `{}`", t.text),
            }),
            None => Err(Error::Parse {
                line: self.last_line(),
                msg: format!("expected `{text}`, found end of file"),
            }),
        }
    }

    fn last_line(&self) -> usize {
        self.tokens.last().map(|t| t.line).unwrap_or(0)
    }

    fn number(&mut self) -> Result<(f64, usize)> {
        match self.next() {
            Some(t) => t
                .text
                .parse::<f64>()
                .map(|v| (v, t.line))
                .map_err(|_| Error::Parse {
                    line: t.line,
                    msg: format!("expected a number, found `{}`", t.text),
                }),
            None => Err(Error::Parse {
                line: self.last_line(),
                msg: "expected a number, found end of file".into(),
            }),
        }
    }
}

/// Index resolution for states/actions/observations given either names or
/// numeric indices; `*` means "all".
#[derive(Debug)]
struct NameSpace {
    names: Option<HashMap<String, usize>>,
    count: usize,
    what: &'static str,
}

impl NameSpace {
    fn resolve(&self, tok: &Token) -> Result<Vec<usize>> {
        if tok.text == "*" {
            return Ok((0..self.count).collect());
        }
        if let Ok(idx) = tok.text.parse::<usize>() {
            if idx < self.count {
                return Ok(vec![idx]);
            }
            return Err(Error::Semantic {
                line: tok.line,
                msg: format!("{} index {idx} out of range (< {})", self.what, self.count),
            });
        }
        if let Some(names) = &self.names {
            if let Some(&idx) = names.get(&tok.text) {
                return Ok(vec![idx]);
            }
        }
        Err(Error::Semantic {
            line: tok.line,
            msg: format!("unknown {} `{}`", self.what, tok.text),
        })
    }
}

fn parse_space(cur: &mut Cursor, what: &'static str) -> Result<NameSpace> {
    cur.expect(":")?;
    let first = cur.next().ok_or_else(|| Error::Parse {
        line: cur.last_line(),
        msg: format!("{what}: expected a count or a name list"),
    })?;
    if let Ok(count) = first.text.parse::<usize>() {
        if count == 0 {
            return Err(Error::Semantic {
                line: first.line,
                msg: format!("{what} count must be positive"),
            });
        }
        return Ok(NameSpace {
            names: None,
            count,
            what,
        });
    }
    // Name list: names continue while tokens stay on the same line.
    let line = first.line;
    let mut names = vec![first.text];
    while let Some(t) = cur.peek() {
        if t.line == line && t.text != ":" {
            names.push(cur.next().unwrap().text);
        } else {
            break;
        }
    }
    let mut map = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(Error::Semantic {
                line,
                msg: format!("duplicate {what} name `{n}`"),
            });
        }
    }
    Ok(NameSpace {
        names: Some(map),
        count: names.len(),
        what,
    })
}

#[derive(Debug, Clone)]
struct RewardEntry {
    actions: Vec<usize>,
    states: Vec<usize>,
    /// None = wildcard over successors.
    next_states: Option<Vec<usize>>,
    /// None = wildcard over observations.
    observations: Option<Vec<usize>>,
    value: f64,
}

fn looks_numeric(text: &str) -> bool {
    text.parse::<f64>().is_ok()
}

/// Reads `count` numbers (spanning lines freely).
fn read_row(cur: &mut Cursor, count: usize) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(count);
    for _ in 0..count {
        row.push(cur.number()?.0);
    }
    Ok(row)
}

pub fn parse_pomdp_str_with(src: &str, opts: &ParseOptions) -> Result<Pomdp> {
    let mut cur = Cursor {
        tokens: tokenize(src),
        pos: 0,
    };

    let mut discount: Option<(f64, usize)> = None;
    let mut cost_values = false;
    let mut states: Option<NameSpace> = None;
    let mut actions: Option<NameSpace> = None;
    let mut observations: Option<NameSpace> = None;
    let mut start_tokens: Option<(Vec<Token>, usize, StartKind)> = None;

    #[derive(Debug, Clone, Copy, PartialEq)]
    enum StartKind {
        Plain,
        Include,
        Exclude,
    }

    // Deferred dynamics entries; applied once all spaces are known.
    let mut transition: Option<Vec<DMatrix<f64>>> = None;
    let mut observation: Option<Vec<DMatrix<f64>>> = None;
    let mut rewards: Vec<RewardEntry> = Vec::new();

    macro_rules! need {
        ($opt:expr, $what:literal, $line:expr) => {
            $opt.as_ref().ok_or_else(|| Error::Semantic {
                line: $line,
                msg: concat!($what, " must be declared before this entry").into(),
            })?
        };
    }

    while let Some(tok) = cur.next() {
        match tok.text.as_str() {
            "discount" => {
                cur.expect(":")?;
                discount = Some(cur.number()?);
            }
            "values" => {
                cur.expect(":")?;
                let v = cur.next().ok_or_else(|| Error::Parse {
                    line: tok.line,
                    msg: "values: expected `reward` or `cost`".into(),
                })?;
                match v.text.as_str() {
                    "reward" | "rewards" => cost_values = false,
                    "cost" | "costs" => cost_values = true,
                    other => {
                        return Err(Error::Parse {
                            line: v.line,
                            msg: format!("values: expected `reward` or `cost`, found `{other}`"),
                        })
                    }
                }
            }
            "states" => states = Some(parse_space(&mut cur, "state")?),
            "actions" => actions = Some(parse_space(&mut cur, "action")?),
            "observations" => observations = Some(parse_space(&mut cur, "observation")?),
            "start" => {
                let kind = match cur.peek().map(|t| t.text.as_str()) {
                    Some("include") => {
                        cur.next();
                        StartKind::Include
                    }
                    Some("exclude") => {
                        cur.next();
                        StartKind::Exclude
                    }
                    _ => StartKind::Plain,
                };
                cur.expect(":")?;
                // Collect tokens up to the end of the logical entry: numbers
                // may span lines for a full distribution, names stay on the
                // start line.
                let n = need!(states, "states", tok.line).count;
                let mut toks = Vec::new();
                match kind {
                    StartKind::Plain => {
                        let first = cur.next().ok_or_else(|| Error::Parse {
                            line: tok.line,
                            msg: "start: expected a distribution, name or `uniform`".into(),
                        })?;
                        if looks_numeric(&first.text) && n > 1 {
                            toks.push(first);
                            for _ in 1..n {
                                let t = cur.next().ok_or_else(|| Error::Parse {
                                    line: tok.line,
                                    msg: format!("start: expected {n} probabilities"),
                                })?;
                                toks.push(t);
                            }
                        } else {
                            toks.push(first);
                        }
                    }
                    _ => {
                        let line = tok.line;
                        while let Some(t) = cur.peek() {
                            if t.line == line {
                                toks.push(cur.next().unwrap());
                            } else {
                                break;
                            }
                        }
                    }
                }
                start_tokens = Some((toks, tok.line, kind));
            }
            "T" => {
                cur.expect(":")?;
                let st = need!(states, "states", tok.line);
                let ac = need!(actions, "actions", tok.line);
                let n = st.count;
                if transition.is_none() {
                    transition = Some(vec![DMatrix::zeros(n, n); ac.count]);
                }
                let t_mats = transition.as_mut().unwrap();

                let a_tok = cur.next().ok_or_else(|| Error::Parse {
                    line: tok.line,
                    msg: "T: expected an action".into(),
                })?;
                let a_idx = ac.resolve(&a_tok)?;

                if cur.peek().map(|t| t.text.as_str()) == Some(":") {
                    cur.next();
                    let s_tok = cur.next().ok_or_else(|| Error::Parse {
                        line: a_tok.line,
                        msg: "T: expected a source state".into(),
                    })?;
                    let s_idx = st.resolve(&s_tok)?;
                    if cur.peek().map(|t| t.text.as_str()) == Some(":") {
                        cur.next();
                        let sp_tok = cur.next().ok_or_else(|| Error::Parse {
                            line: s_tok.line,
                            msg: "T: expected a successor state".into(),
                        })?;
                        let sp_idx = st.resolve(&sp_tok)?;
                        let (v, _) = cur.number()?;
                        for &a in &a_idx {
                            for &s in &s_idx {
                                for &sp in &sp_idx {
                                    t_mats[a][(s, sp)] = v;
                                }
                            }
                        }
                    } else {
                        // Row form: n numbers or `uniform`.
                        if cur.peek().map(|t| t.text.as_str()) == Some("uniform") {
                            cur.next();
                            for &a in &a_idx {
                                for &s in &s_idx {
                                    for sp in 0..n {
                                        t_mats[a][(s, sp)] = 1.0 / n as f64;
                                    }
                                }
                            }
                        } else {
                            let row = read_row(&mut cur, n)?;
                            for &a in &a_idx {
                                for &s in &s_idx {
                                    for (sp, &v) in row.iter().enumerate() {
                                        t_mats[a][(s, sp)] = v;
                                    }
                                }
                            }
                        }
                    }
                } else {
                    // Matrix form: `uniform`, `identity`, or n*n numbers.
                    match cur.peek().map(|t| t.text.as_str()) {
                        Some("uniform") => {
                            cur.next();
                            for &a in &a_idx {
                                t_mats[a].fill(1.0 / n as f64);
                            }
                        }
                        Some("identity") => {
                            cur.next();
                            for &a in &a_idx {
                                t_mats[a] = DMatrix::identity(n, n);
                            }
                        }
                        _ => {
                            for s in 0..n {
                                let row = read_row(&mut cur, n)?;
                                for &a in &a_idx {
                                    for (sp, &v) in row.iter().enumerate() {
                                        t_mats[a][(s, sp)] = v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            "O" => {
                cur.expect(":")?;
                let st = need!(states, "states", tok.line);
                let ac = need!(actions, "actions", tok.line);
                let ob = need!(observations, "observations", tok.line);
                let n = st.count;
                let nz = ob.count;
                if observation.is_none() {
                    observation = Some(vec![DMatrix::zeros(n, nz); ac.count]);
                }
                let o_mats = observation.as_mut().unwrap();

                let a_tok = cur.next().ok_or_else(|| Error::Parse {
                    line: tok.line,
                    msg: "O: expected an action".into(),
                })?;
                let a_idx = ac.resolve(&a_tok)?;

                if cur.peek().map(|t| t.text.as_str()) == Some(":") {
                    cur.next();
                    let sp_tok = cur.next().ok_or_else(|| Error::Parse {
                        line: a_tok.line,
                        msg: "O: expected a successor state".into(),
                    })?;
                    let sp_idx = st.resolve(&sp_tok)?;
                    if cur.peek().map(|t| t.text.as_str()) == Some(":") {
                        cur.next();
                        let z_tok = cur.next().ok_or_else(|| Error::Parse {
                            line: sp_tok.line,
                            msg: "O: expected an observation".into(),
                        })?;
                        let z_idx = ob.resolve(&z_tok)?;
                        let (v, _) = cur.number()?;
                        for &a in &a_idx {
                            for &sp in &sp_idx {
                                for &z in &z_idx {
                                    o_mats[a][(sp, z)] = v;
                                }
                            }
                        }
                    } else if cur.peek().map(|t| t.text.as_str()) == Some("uniform") {
                        cur.next();
                        for &a in &a_idx {
                            for &sp in &sp_idx {
                                for z in 0..nz {
                                    o_mats[a][(sp, z)] = 1.0 / nz as f64;
                                }
                            }
                        }
                    } else {
                        let row = read_row(&mut cur, nz)?;
                        for &a in &a_idx {
                            for &sp in &sp_idx {
                                for (z, &v) in row.iter().enumerate() {
                                    o_mats[a][(sp, z)] = v;
                                }
                            }
                        }
                    }
                } else {
                    match cur.peek().map(|t| t.text.as_str()) {
                        Some("uniform") => {
                            cur.next();
                            for &a in &a_idx {
                                o_mats[a].fill(1.0 / nz as f64);
                            }
                        }
                        Some("identity") => {
                            let t = cur.next().unwrap();
                            if n != nz {
                                return Err(Error::Semantic {
                                    line: t.line,
                                    msg: format!("O: identity needs |Z| == |S| (got {nz} vs {n})"),
                                });
                            }
                            for &a in &a_idx {
                                o_mats[a] = DMatrix::identity(n, nz);
                            }
                        }
                        _ => {
                            for sp in 0..n {
                                let row = read_row(&mut cur, nz)?;
                                for &a in &a_idx {
                                    for (z, &v) in row.iter().enumerate() {
                                        o_mats[a][(sp, z)] = v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            "R" => {
                cur.expect(":")?;
                let st = need!(states, "states", tok.line);
                let ac = need!(actions, "actions", tok.line);
                let ob = need!(observations, "observations", tok.line);
                let n = st.count;
                let nz = ob.count;

                let a_tok = cur.next().ok_or_else(|| Error::Parse {
                    line: tok.line,
                    msg: "R: expected an action".into(),
                })?;
                let a_idx = ac.resolve(&a_tok)?;
                cur.expect(":")?;
                let s_tok = cur.next().ok_or_else(|| Error::Parse {
                    line: a_tok.line,
                    msg: "R: expected a state".into(),
                })?;
                let s_idx = st.resolve(&s_tok)?;

                if cur.peek().map(|t| t.text.as_str()) == Some(":") {
                    cur.next();
                    let sp_tok = cur.next().ok_or_else(|| Error::Parse {
                        line: s_tok.line,
                        msg: "R: expected a successor state".into(),
                    })?;
                    let sp_wild = sp_tok.text == "*";
                    let sp_idx = st.resolve(&sp_tok)?;
                    if cur.peek().map(|t| t.text.as_str()) == Some(":") {
                        cur.next();
                        let z_tok = cur.next().ok_or_else(|| Error::Parse {
                            line: sp_tok.line,
                            msg: "R: expected an observation".into(),
                        })?;
                        let z_wild = z_tok.text == "*";
                        let z_idx = ob.resolve(&z_tok)?;
                        let (v, _) = cur.number()?;
                        rewards.push(RewardEntry {
                            actions: a_idx,
                            states: s_idx,
                            next_states: if sp_wild { None } else { Some(sp_idx) },
                            observations: if z_wild { None } else { Some(z_idx) },
                            value: v,
                        });
                    } else {
                        // Row over observations.
                        let row = read_row(&mut cur, nz)?;
                        for (z, &v) in row.iter().enumerate() {
                            rewards.push(RewardEntry {
                                actions: a_idx.clone(),
                                states: s_idx.clone(),
                                next_states: if sp_wild { None } else { Some(sp_idx.clone()) },
                                observations: Some(vec![z]),
                                value: v,
                            });
                        }
                    }
                } else {
                    // Matrix over successors x observations.
                    for sp in 0..n {
                        let row = read_row(&mut cur, nz)?;
                        for (z, &v) in row.iter().enumerate() {
                            rewards.push(RewardEntry {
                                actions: a_idx.clone(),
                                states: s_idx.clone(),
                                next_states: Some(vec![sp]),
                                observations: Some(vec![z]),
                                value: v,
                            });
                        }
                    }
                }
            }
            other => {
                return Err(Error::Parse {
                    line: tok.line,
                    msg: format!("unexpected token `{other}`"),
                });
            }
        }
    }

    // Assemble and validate.
    let (discount, disc_line) = discount.ok_or_else(|| Error::Semantic {
        line: 0,
        msg: "missing discount".into(),
    })?;
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::Semantic {
            line: disc_line,
            msg: format!("discount must satisfy 0 < eta < 1, got {discount}"),
        });
    }
    let st = states.ok_or_else(|| Error::Semantic {
        line: 0,
        msg: "missing states".into(),
    })?;
    let ac = actions.ok_or_else(|| Error::Semantic {
        line: 0,
        msg: "missing actions".into(),
    })?;
    let ob = observations.ok_or_else(|| Error::Semantic {
        line: 0,
        msg: "missing observations".into(),
    })?;
    let n = st.count;
    let mut transition = transition.unwrap_or_else(|| vec![DMatrix::zeros(n, n); ac.count]);
    let mut observation =
        observation.unwrap_or_else(|| vec![DMatrix::zeros(n, ob.count); ac.count]);

    if opts.renormalise {
        for m in transition.iter_mut().chain(observation.iter_mut()) {
            for i in 0..m.nrows() {
                let sum: f64 = (0..m.ncols()).map(|j| m[(i, j)]).sum();
                if sum > 0.0
                    && (sum - 1.0).abs() > STOCHASTIC_TOL
                    && (sum - 1.0).abs() <= RENORM_TOL
                {
                    for j in 0..m.ncols() {
                        m[(i, j)] /= sum;
                    }
                }
            }
        }
    }

    // Marginalise rewards: R(s, a) = sum_{s', z} T(s'|s,a) O(z|s',a) r(a,s,s',z).
    let mut reward = DMatrix::zeros(n, ac.count);
    let mut grid: Vec<f64> = Vec::new();
    for a in 0..ac.count {
        for s in 0..n {
            let relevant: Vec<&RewardEntry> = rewards
                .iter()
                .filter(|e| e.actions.contains(&a) && e.states.contains(&s))
                .collect();
            if relevant.is_empty() {
                continue;
            }
            // Fast path: purely (s, a)-level entries; the last one wins.
            if relevant
                .iter()
                .all(|e| e.next_states.is_none() && e.observations.is_none())
            {
                reward[(s, a)] = relevant.last().unwrap().value;
                continue;
            }
            grid.clear();
            grid.resize(n * ob.count, 0.0);
            for e in &relevant {
                match (&e.next_states, &e.observations) {
                    (None, None) => grid.iter_mut().for_each(|g| *g = e.value),
                    (Some(sps), None) => {
                        for &sp in sps {
                            for z in 0..ob.count {
                                grid[sp * ob.count + z] = e.value;
                            }
                        }
                    }
                    (None, Some(zs)) => {
                        for sp in 0..n {
                            for &z in zs {
                                grid[sp * ob.count + z] = e.value;
                            }
                        }
                    }
                    (Some(sps), Some(zs)) => {
                        for &sp in sps {
                            for &z in zs {
                                grid[sp * ob.count + z] = e.value;
                            }
                        }
                    }
                }
            }
            let mut expect = 0.0;
            for sp in 0..n {
                let t = transition[a][(s, sp)];
                if t == 0.0 {
                    continue;
                }
                for z in 0..ob.count {
                    let w = grid[sp * ob.count + z];
                    if w != 0.0 {
                        expect += t * observation[a][(sp, z)] * w;
                    }
                }
            }
            reward[(s, a)] = expect;
        }
    }
    if cost_values {
        reward.neg_mut();
    }

    // Initial belief.
    let initial_belief = match start_tokens {
        None => Belief::uniform(n),
        Some((toks, line, kind)) => match kind {
            StartKind::Plain => {
                if toks.len() == 1 {
                    let t = &toks[0];
                    if t.text == "uniform" {
                        Belief::uniform(n)
                    } else if n == 1 && looks_numeric(&t.text) {
                        Belief::uniform(1)
                    } else {
                        let idx = st.resolve(t)?;
                        if idx.len() != 1 {
                            return Err(Error::Semantic {
                                line,
                                msg: "start: wildcard is not a valid initial state".into(),
                            });
                        }
                        Belief::indicator(n, idx[0])
                    }
                } else {
                    let mut probs = DVector::zeros(n);
                    for (i, t) in toks.iter().enumerate() {
                        probs[i] = t.text.parse::<f64>().map_err(|_| Error::Parse {
                            line: t.line,
                            msg: format!("start: expected a probability, found `{}`", t.text),
                        })?;
                    }
                    let sum: f64 = probs.iter().sum();
                    if opts.renormalise && sum > 0.0 && (sum - 1.0).abs() <= RENORM_TOL {
                        probs /= sum;
                    }
                    Belief::new(probs).map_err(|e| Error::Semantic {
                        line,
                        msg: format!("start distribution invalid: {e}"),
                    })?
                }
            }
            StartKind::Include | StartKind::Exclude => {
                let mut member = vec![kind == StartKind::Exclude; n];
                for t in &toks {
                    for idx in st.resolve(t)? {
                        member[idx] = kind == StartKind::Include;
                    }
                }
                let total = member.iter().filter(|&&m| m).count();
                if total == 0 {
                    return Err(Error::Semantic {
                        line,
                        msg: "start include/exclude leaves no states".into(),
                    });
                }
                let probs =
                    DVector::from_fn(n, |i, _| if member[i] { 1.0 / total as f64 } else { 0.0 });
                Belief::new(probs).expect("constructed distribution")
            }
        },
    };

    let model = Pomdp {
        n_states: n,
        n_actions: ac.count,
        n_obs: ob.count,
        transition,
        observation,
        reward,
        discount,
        initial_belief,
    };
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::Invalid(report));
    }
    Ok(model)
}

pub fn parse_pomdp_str(src: &str) -> Result<Pomdp> {
    parse_pomdp_str_with(src, &ParseOptions::default())
}

pub fn parse_pomdp(path: &Path) -> Result<Pomdp> {
    let src = std::fs::read_to_string(path)?;
    parse_pomdp_str(&src)
}
