//! Plain-text network checkpoints.
//!
//! ```text
//! ompath-checkpoint 1
//! actor <state_dim> <hidden> <action_dim>
//! critic <input_dim> <hidden>
//! <one f64 per line>
//! ```
//!
//! Values follow the order actor W₁, b₁, W₂, b₂, a_max, then critic W₁, b₁,
//! c, c₀, each matrix row-major.

use std::path::Path;

use super::{read_file, write_file, ExpError, Result};
use crate::nn::{ActorNet, CriticNet, DenseLayer};
use crate::tensor::Tensor;

const MAGIC: &str = "ompath-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actor: ActorNet,
    pub critic: CriticNet,
}

impl Checkpoint {
    /// Rejects a checkpoint whose shapes differ from the expected ones.
    pub fn expect_dims(&self, state_dim: usize, action_dim: usize, hidden: usize) -> std::result::Result<(), String> {
        let found = (self.actor.state_dim(), self.actor.action_dim(), self.actor.hidden_width());
        let expected = (state_dim, action_dim, hidden);
        if found != expected {
            return Err(format!(
                "actor dims (state, action, hidden): expected {expected:?}, found {found:?}"
            ));
        }
        let found = (self.critic.input_dim(), self.critic.hidden_width());
        let expected = (state_dim + action_dim, hidden);
        if found != expected {
            return Err(format!("critic dims (input, hidden): expected {expected:?}, found {found:?}"));
        }
        Ok(())
    }
}

pub fn render_checkpoint(actor: &ActorNet, critic: &CriticNet) -> String {
    let mut out = format!(
        "{MAGIC}\nactor {} {} {}\ncritic {} {}\n",
        actor.state_dim(),
        actor.hidden_width(),
        actor.action_dim(),
        critic.input_dim(),
        critic.hidden_width()
    );
    let values = actor
        .params()
        .into_iter()
        .flat_map(|t| t.data().iter().copied())
        .chain(std::iter::once(actor.action_scale))
        .chain(critic.params().into_iter().flat_map(|t| t.data().iter().copied()));
    for v in values {
        out.push_str(&format!("{v:e}\n"));
    }
    out
}

pub fn save_checkpoint(actor: &ActorNet, critic: &CriticNet, path: &Path) -> Result<()> {
    write_file(path, &render_checkpoint(actor, critic))
}

fn dims<const K: usize>(line: Option<&str>, tag: &str) -> std::result::Result<[usize; K], String> {
    let line = line.ok_or_else(|| format!("missing `{tag}` header line"))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(format!("expected `{tag}` header, found `{line}`"));
    }
    let nums: Vec<usize> = parts
        .map(|p| p.parse().map_err(|_| format!("bad dimension `{p}` in `{line}`")))
        .collect::<std::result::Result<_, _>>()?;
    if nums.len() != K || nums.contains(&0) {
        return Err(format!("`{tag}` header needs {K} positive dimensions, found `{line}`"));
    }
    Ok(std::array::from_fn(|i| nums[i]))
}

fn parse_inner(text: &str) -> std::result::Result<Checkpoint, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(MAGIC) => {}
        other => return Err(format!("not a checkpoint (first line {other:?})")),
    }
    let [d, h, u] = dims::<3>(lines.next(), "actor")?;
    let [ci, ch] = dims::<2>(lines.next(), "critic")?;
    let needed = h * d + h + u * h + u + 1 + ch * ci + ch + ch + 1;
    let values: Vec<f64> = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|_| format!("value {}: cannot parse `{l}`", i + 1)))
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != needed {
        let what = if values.len() < needed { "truncated" } else { "trailing data" };
        return Err(format!("{what}: expected {needed} values, found {}", values.len()));
    }
    let mut rest = values.as_slice();
    let mut take = |rows: usize, cols: usize| {
        let (head, tail) = rest.split_at(rows * cols);
        rest = tail;
        Tensor::from_vec(rows, cols, head.to_vec())
    };
    let layer = |weights: Tensor, biases: Tensor| DenseLayer { weights, biases };
    let a1 = layer(take(h, d), take(1, h));
    let a2 = layer(take(u, h), take(1, u));
    let scale = take(1, 1).item();
    let c1 = layer(take(ch, ci), take(1, ch));
    let c2 = layer(take(1, ch), take(1, 1));
    Ok(Checkpoint {
        actor: ActorNet {
            hidden: a1,
            output: a2,
            action_scale: scale,
        },
        critic: CriticNet { hidden: c1, output: c2 },
    })
}

/// Parses checkpoint text; `origin` only labels errors.
pub fn parse_checkpoint(text: &str, origin: &Path) -> Result<Checkpoint> {
    parse_inner(text).map_err(|reason| ExpError::Checkpoint {
        path: origin.to_path_buf(),
        reason,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nets(seed: u64) -> (ActorNet, CriticNet) {
        (ActorNet::from_seed(2, 7, 2, 3.5, seed), CriticNet::from_seed(2, 2, 7, seed + 1))
    }

    #[test]
    fn roundtrip_is_exact() {
        let (a, c) = nets(4);
        let ck = parse_checkpoint(&render_checkpoint(&a, &c), Path::new("mem")).unwrap();
        assert_eq!(ck.actor, a);
        assert_eq!(ck.critic, c);
        assert!(ck.expect_dims(2, 2, 7).is_ok());
        let err = ck.expect_dims(3, 3, 7).unwrap_err();
        assert!(err.contains("expected (3, 3, 7), found (2, 2, 7)"), "{err}");
    }

    #[test]
    fn truncated_and_garbled() {
        let (a, c) = nets(1);
        let text = render_checkpoint(&a, &c);
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        let err = parse_checkpoint(&cut, Path::new("x")).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
        let bad = text.replacen("critic 4 7", "critic 4 x", 1);
        assert!(parse_checkpoint(&bad, Path::new("x")).is_err());
        assert!(parse_checkpoint("", Path::new("x")).is_err());
        let extra = format!("{text}1.0\n");
        assert!(parse_checkpoint(&extra, Path::new("x")).unwrap_err().to_string().contains("trailing"));
    }
}
