//! Emits an in-memory model back to the community text format, mainly so
//! synthetic fixtures can feed any tool that reads the standard format (and
//! so the parser can be exercised on generated files).

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::io::csv::g17;
use crate::pomdp::Pomdp;

pub fn pomdp_to_string(model: &Pomdp) -> String {
    let mut out = String::new();
    out.push_str(&format!("discount: {}\n", g17(model.discount)));
    out.push_str("values: reward\n");
    out.push_str(&format!("states: {}\n", model.n_states));
    out.push_str(&format!("actions: {}\n", model.n_actions));
    out.push_str(&format!("observations: {}\n\n", model.n_obs));

    let probs: Vec<String> = model
        .initial_belief
        .probs()
        .iter()
        .map(|&p| g17(p))
        .collect();
    out.push_str(&format!("start: {}\n\n", probs.join(" ")));

    for a in 0..model.n_actions {
        out.push_str(&format!("T: {a}\n"));
        for s in 0..model.n_states {
            let row: Vec<String> = (0..model.n_states)
                .map(|sp| g17(model.transition[a][(s, sp)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    for a in 0..model.n_actions {
        out.push_str(&format!("O: {a}\n"));
        for sp in 0..model.n_states {
            let row: Vec<String> = (0..model.n_obs)
                .map(|z| g17(model.observation[a][(sp, z)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    for a in 0..model.n_actions {
        for s in 0..model.n_states {
            let r = model.reward[(s, a)];
            if r != 0.0 {
                out.push_str(&format!("R: {a} : {s} : * : * {}\n", g17(r)));
            }
        }
    }
    out
}

pub fn write_pomdp(path: &Path, model: &Pomdp) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(pomdp_to_string(model).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_pomdp;
    use crate::io::parser::parse_pomdp_str;
    use crate::pomdp::synth_lowrank_pomdp;

    #[test]
    fn writer_parser_roundtrip_random_model() {
        let model = random_pomdp(5, 3, 4, 21);
        let text = pomdp_to_string(&model);
        let reparsed = parse_pomdp_str(&text).unwrap();
        assert_eq!(reparsed.n_states, model.n_states);
        for a in 0..model.n_actions {
            assert!((&reparsed.transition[a] - &model.transition[a]).abs().max() < 1e-12);
            assert!(
                (&reparsed.observation[a] - &model.observation[a])
                    .abs()
                    .max()
                    < 1e-12
            );
        }
        assert!((&reparsed.reward - &model.reward).abs().max() < 1e-12);
        assert!((reparsed.discount - model.discount).abs() < 1e-15);
        assert!((reparsed.initial_belief.probs() - model.initial_belief.probs()).norm() < 1e-12);
    }

    #[test]
    fn writer_parser_roundtrip_lowrank_fixture() {
        let model = synth_lowrank_pomdp(3, 10, 5).unwrap();
        let reparsed = parse_pomdp_str(&pomdp_to_string(&model)).unwrap();
        assert!(reparsed.validate().is_valid());
        assert_eq!(reparsed.n_obs, model.n_obs);
    }
}
