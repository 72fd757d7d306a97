//! Forward propagation, readout, loss and the matching reverse pass.

use alloc::vec;
use alloc::vec::Vec;

use super::batch::Batch;
use super::linalg::{add_bias, mm, sigmoid, sum_rows_into, tanh, View};
use super::params::{ModelParameters, EDGE_TYPES};
use super::{ModelConfig, ModelError};

/// `pos[2i] = sin(p / 10000^(2i/dim))`, `pos[2i+1] = cos(...)`.
pub fn position_encoding(position: u32, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let angle = position as f64 / libm::pow(10000.0, (j - j % 2) as f64 / dim as f64);
            if j % 2 == 0 {
                libm::sin(angle)
            } else {
                libm::cos(angle)
            }
        })
        .collect()
}

fn position_table(max: u32, dim: usize) -> Vec<f64> {
    (0..=max).flat_map(|p| position_encoding(p, dim)).collect()
}

fn check_shapes(batch: &Batch, params: &ModelParameters, config: &ModelConfig) -> Result<(), ModelError> {
    if params.embed_dim() != config.embed_dim {
        return Err(ModelError::Shape(alloc::format!(
            "parameters have d = {} but the configuration asks for {}",
            params.embed_dim(),
            config.embed_dim
        )));
    }
    if let Some(&t) = batch.tokens.iter().find(|&&t| t as usize >= params.vocab_size()) {
        return Err(ModelError::Shape(alloc::format!(
            "token id {t} is outside the vocabulary of {}",
            params.vocab_size()
        )));
    }
    Ok(())
}

/// `h⁰`: token embedding followed by the scaled selector one-hot.
pub fn initial_states(batch: &Batch, params: &ModelParameters, config: &ModelConfig) -> Result<Vec<f64>, ModelError> {
    check_shapes(batch, params, config)?;
    let (d, h) = (params.embed_dim(), params.hidden());
    let mut out = vec![0.0; batch.num_vertices() * h];
    for (v, row) in out.chunks_exact_mut(h).enumerate() {
        row[..d].copy_from_slice(params.embedding_row(batch.tokens[v] as usize));
        let sel = if batch.selected[v] { d + 1 } else { d };
        row[sel] = config.selector_scale;
    }
    Ok(out)
}

/// Per-type message inputs `S_k[v] = Σ h[w] ⊙ pos(e)`, laid out n × 6H.
fn gather(batch: &Batch, hprev: &[f64], pos: &[f64], h: usize) -> Vec<f64> {
    let w = EDGE_TYPES * h;
    let mut s = vec![0.0; batch.num_vertices() * w];
    for (k, routes) in batch.routes.iter().enumerate() {
        for r in routes {
            let dst = &mut s[r.to as usize * w + k * h..][..h];
            let src = &hprev[r.from as usize * h..][..h];
            let p = &pos[r.position as usize * h..][..h];
            for j in 0..h {
                dst[j] += src[j] * p[j];
            }
        }
    }
    s
}

struct Trace {
    /// States h⁰..hᵀ, each n × H.
    states: Vec<Vec<f64>>,
    messages: Vec<Vec<f64>>,
    /// Post-activation gates per step, n × 3H as z | r | candidate.
    gates: Vec<Vec<f64>>,
    pos: Vec<f64>,
}

fn run_steps(batch: &Batch, params: &ModelParameters, config: &ModelConfig, keep: bool) -> Result<Trace, ModelError> {
    let h0 = initial_states(batch, params, config)?;
    let l = params.layout();
    let (n, h) = (batch.num_vertices(), l.hidden);
    let pos = position_table(batch.max_position, h);
    let a = params.slice(&l.message);
    let w = params.slice(&l.gru_w);
    let u = params.slice(&l.gru_u);
    let b = params.slice(&l.gru_b);
    let mut trace = Trace { states: vec![h0], messages: Vec::new(), gates: Vec::new(), pos };
    for _ in 0..config.timesteps {
        let hp = trace.states.last().unwrap();
        let s = gather(batch, hp, &trace.pos, h);
        let mut m = vec![0.0; n * h];
        mm(n, EDGE_TYPES * h, h, View::rm(&s, EDGE_TYPES * h), View::rm(a, h), &mut m, h, 0.0);
        let mut g = vec![0.0; n * 3 * h];
        mm(n, h, 3 * h, View::rm(&m, h), View::rm(w, 3 * h), &mut g, 3 * h, 0.0);
        add_bias(n, 3 * h, &mut g, b);
        mm(n, h, 2 * h, View::rm(hp, h), View::rm(u, 3 * h), &mut g, 3 * h, 1.0);
        let mut rh = vec![0.0; n * h];
        for v in 0..n {
            let row = &mut g[v * 3 * h..][..2 * h];
            for x in row.iter_mut() {
                *x = sigmoid(*x);
            }
            for j in 0..h {
                rh[v * h + j] = row[h + j] * hp[v * h + j];
            }
        }
        mm(n, h, h, View::rm(&rh, h), View::rm(u, 3 * h).at(2 * h), &mut g[2 * h..], 3 * h, 1.0);
        let mut next = vec![0.0; n * h];
        for v in 0..n {
            let row = &mut g[v * 3 * h..][..3 * h];
            for j in 0..h {
                let c = tanh(row[2 * h + j]);
                row[2 * h + j] = c;
                let z = row[j];
                next[v * h + j] = (1.0 - z) * hp[v * h + j] + z * c;
            }
        }
        if keep {
            trace.messages.push(m);
            trace.gates.push(g);
            trace.states.push(next);
        } else if trace.states.len() == 2 {
            trace.states[1] = next;
        } else {
            trace.states.push(next);
        }
    }
    Ok(trace)
}

/// Final states `hᵀ` after `config.timesteps` synchronous GRU updates, n × H.
pub fn propagate(batch: &Batch, params: &ModelParameters, config: &ModelConfig) -> Result<Vec<f64>, ModelError> {
    let mut t = run_steps(batch, params, config, false)?;
    Ok(t.states.pop().unwrap())
}

struct Readout {
    x: Vec<f64>,
    u1: Vec<f64>,
    i: Vec<f64>,
    u2: Vec<f64>,
    j: Vec<f64>,
    scores: Vec<f64>,
}

fn readout_rows(n: usize, ht: &[f64], h0: &[f64], params: &ModelParameters) -> Readout {
    let l = params.layout();
    let h = l.hidden;
    let mut x = vec![0.0; n * 2 * h];
    for v in 0..n {
        x[v * 2 * h..][..h].copy_from_slice(&ht[v * h..][..h]);
        x[v * 2 * h + h..][..h].copy_from_slice(&h0[v * h..][..h]);
    }
    let mut u1 = vec![0.0; n * h];
    mm(n, 2 * h, h, View::rm(&x, 2 * h), View::rm(params.slice(&l.i1_w), h), &mut u1, h, 0.0);
    add_bias(n, h, &mut u1, params.slice(&l.i1_b));
    u1.iter_mut().for_each(|a| *a = tanh(*a));
    let mut i = vec![0.0; n * 2];
    mm(n, h, 2, View::rm(&u1, h), View::rm(params.slice(&l.i2_w), 2), &mut i, 2, 0.0);
    add_bias(n, 2, &mut i, params.slice(&l.i2_b));
    let mut u2 = vec![0.0; n * h];
    mm(n, h, h, View::rm(ht, h), View::rm(params.slice(&l.j1_w), h), &mut u2, h, 0.0);
    add_bias(n, h, &mut u2, params.slice(&l.j1_b));
    u2.iter_mut().for_each(|a| *a = tanh(*a));
    let mut j = vec![0.0; n * 2];
    mm(n, h, 2, View::rm(&u2, h), View::rm(params.slice(&l.j2_w), 2), &mut j, 2, 0.0);
    add_bias(n, 2, &mut j, params.slice(&l.j2_b));
    let scores = i.iter().zip(&j).map(|(a, b)| sigmoid(*a) * b).collect();
    Readout { x, u1, i, u2, j, scores }
}

fn check_readout(ht: &[f64], h0: &[f64], params: &ModelParameters) -> Result<usize, ModelError> {
    let h = params.hidden();
    if ht.len() != h0.len() || ht.len() % h != 0 {
        return Err(ModelError::Shape(alloc::format!(
            "readout needs two n × {h} state blocks, got lengths {} and {}",
            ht.len(),
            h0.len()
        )));
    }
    Ok(ht.len() / h)
}

/// `σ(i(hᵀ, h⁰)) ⊙ j(hᵀ)` for one vertex.
pub fn readout_vertex(ht: &[f64], h0: &[f64], params: &ModelParameters) -> Result<[f64; 2], ModelError> {
    if check_readout(ht, h0, params)? != 1 {
        return Err(ModelError::Shape(alloc::format!("expected one state of width {}", params.hidden())));
    }
    let r = readout_rows(1, ht, h0, params);
    Ok([r.scores[0], r.scores[1]])
}

/// Per-vertex scores for n stacked states, n × 2.
pub fn readout(ht: &[f64], h0: &[f64], params: &ModelParameters) -> Result<Vec<f64>, ModelError> {
    let n = check_readout(ht, h0, params)?;
    Ok(readout_rows(n, ht, h0, params).scores)
}

/// Sum of the per-vertex readout over all vertices.
pub fn readout_graph(ht: &[f64], h0: &[f64], params: &ModelParameters) -> Result<[f64; 2], ModelError> {
    let s = readout(ht, h0, params)?;
    let mut out = [0.0; 2];
    for row in s.chunks_exact(2) {
        out[0] += row[0];
        out[1] += row[1];
    }
    Ok(out)
}

/// Per-vertex class scores for a batch, n × 2.
pub fn predict(batch: &Batch, params: &ModelParameters, config: &ModelConfig) -> Result<Vec<f64>, ModelError> {
    let t = run_steps(batch, params, config, false)?;
    let ht = t.states.last().unwrap();
    let scores = readout_rows(batch.num_vertices(), ht, &t.states[0], params).scores;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ModelError::NonFiniteLoss);
    }
    Ok(scores)
}

/// Mean cross-entropy over scored vertices and its gradient with respect to
/// the scores.
fn cross_entropy(batch: &Batch, scores: &[f64]) -> (f64, Vec<f64>) {
    let count = batch.num_scored();
    let mut ds = vec![0.0; scores.len()];
    if count == 0 {
        return (0.0, ds);
    }
    let mut loss = 0.0;
    for v in 0..batch.num_vertices() {
        if !batch.scored[v] {
            continue;
        }
        let (a, b) = (scores[2 * v], scores[2 * v + 1]);
        let m = a.max(b);
        let lse = m + libm::log(libm::exp(a - m) + libm::exp(b - m));
        let y = batch.labels[v] as usize;
        loss += lse - scores[2 * v + y];
        for c in 0..2 {
            let p = libm::exp(scores[2 * v + c] - lse);
            ds[2 * v + c] = (p - (c == y) as u8 as f64) / count as f64;
        }
    }
    (loss / count as f64, ds)
}

pub fn loss(batch: &Batch, params: &ModelParameters, config: &ModelConfig) -> Result<f64, ModelError> {
    let scores = predict(batch, params, config)?;
    let (l, _) = cross_entropy(batch, &scores);
    if !l.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    Ok(l)
}

/// Loss plus the gradient of every parameter, in the flat parameter layout.
pub fn loss_and_grads(
    batch: &Batch,
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<(f64, Vec<f64>), ModelError> {
    let trace = run_steps(batch, params, config, true)?;
    let l = params.layout();
    let (n, h, d) = (batch.num_vertices(), l.hidden, l.embed_dim);
    let ht = trace.states.last().unwrap();
    let h0 = &trace.states[0];
    let r = readout_rows(n, ht, h0, params);
    if r.scores.iter().any(|s| !s.is_finite()) {
        return Err(ModelError::NonFiniteLoss);
    }
    let (loss, ds) = cross_entropy(batch, &r.scores);
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    let mut g = vec![0.0; l.total];

    // readout
    let mut dj = vec![0.0; n * 2];
    let mut di = vec![0.0; n * 2];
    for k in 0..n * 2 {
        let s = sigmoid(r.i[k]);
        dj[k] = ds[k] * s;
        di[k] = ds[k] * r.j[k] * s * (1.0 - s);
    }
    mm(h, n, 2, View::rm(&r.u2, h).t(), View::rm(&dj, 2), &mut g[l.j2_w.clone()], 2, 1.0);
    sum_rows_into(n, 2, &dj, &mut g[l.j2_b.clone()]);
    let mut da2 = vec![0.0; n * h];
    mm(n, 2, h, View::rm(&dj, 2), View::rm(params.slice(&l.j2_w), 2).t(), &mut da2, h, 0.0);
    for (x, u) in da2.iter_mut().zip(&r.u2) {
        *x *= 1.0 - u * u;
    }
    mm(h, n, h, View::rm(ht, h).t(), View::rm(&da2, h), &mut g[l.j1_w.clone()], h, 1.0);
    sum_rows_into(n, h, &da2, &mut g[l.j1_b.clone()]);
    let mut dh = vec![0.0; n * h];
    mm(n, h, h, View::rm(&da2, h), View::rm(params.slice(&l.j1_w), h).t(), &mut dh, h, 0.0);

    mm(h, n, 2, View::rm(&r.u1, h).t(), View::rm(&di, 2), &mut g[l.i2_w.clone()], 2, 1.0);
    sum_rows_into(n, 2, &di, &mut g[l.i2_b.clone()]);
    let mut da1 = vec![0.0; n * h];
    mm(n, 2, h, View::rm(&di, 2), View::rm(params.slice(&l.i2_w), 2).t(), &mut da1, h, 0.0);
    for (x, u) in da1.iter_mut().zip(&r.u1) {
        *x *= 1.0 - u * u;
    }
    mm(2 * h, n, h, View::rm(&r.x, 2 * h).t(), View::rm(&da1, h), &mut g[l.i1_w.clone()], h, 1.0);
    sum_rows_into(n, h, &da1, &mut g[l.i1_b.clone()]);
    let mut dx = vec![0.0; n * 2 * h];
    mm(n, h, 2 * h, View::rm(&da1, h), View::rm(params.slice(&l.i1_w), h).t(), &mut dx, 2 * h, 0.0);
    let mut dh0 = vec![0.0; n * h];
    for v in 0..n {
        for j in 0..h {
            dh[v * h + j] += dx[v * 2 * h + j];
            dh0[v * h + j] = dx[v * 2 * h + h + j];
        }
    }

    // GRU unroll
    let a = params.slice(&l.message);
    let w = params.slice(&l.gru_w);
    let u = params.slice(&l.gru_u);
    let w6 = EDGE_TYPES * h;
    for t in (0..trace.gates.len()).rev() {
        let hp = &trace.states[t];
        let gates = &trace.gates[t];
        let m = &trace.messages[t];
        let mut dg = vec![0.0; n * 3 * h];
        let mut dhp = vec![0.0; n * h];
        let mut rh = vec![0.0; n * h];
        for v in 0..n {
            for j in 0..h {
                let (z, rr, c) = (gates[v * 3 * h + j], gates[v * 3 * h + h + j], gates[v * 3 * h + 2 * h + j]);
                let x = hp[v * h + j];
                let dn = dh[v * h + j];
                dg[v * 3 * h + j] = dn * (c - x) * z * (1.0 - z);
                dg[v * 3 * h + 2 * h + j] = dn * z * (1.0 - c * c);
                dhp[v * h + j] = dn * (1.0 - z);
                rh[v * h + j] = rr * x;
            }
        }
        let uc = l.gru_u.start + 2 * h;
        mm(h, n, h, View::rm(&rh, h).t(), View::rm(&dg, 3 * h).at(2 * h), &mut g[uc..l.gru_u.end], 3 * h, 1.0);
        let mut drh = vec![0.0; n * h];
        mm(n, h, h, View::rm(&dg, 3 * h).at(2 * h), View::rm(u, 3 * h).at(2 * h).t(), &mut drh, h, 0.0);
        for v in 0..n {
            for j in 0..h {
                let rr = gates[v * 3 * h + h + j];
                let k = v * h + j;
                dhp[k] += drh[k] * rr;
                dg[v * 3 * h + h + j] = drh[k] * hp[k] * rr * (1.0 - rr);
            }
        }
        mm(h, n, 2 * h, View::rm(hp, h).t(), View::rm(&dg, 3 * h), &mut g[l.gru_u.clone()], 3 * h, 1.0);
        mm(n, 2 * h, h, View::rm(&dg, 3 * h), View::rm(u, 3 * h).t(), &mut dhp, h, 1.0);
        mm(h, n, 3 * h, View::rm(m, h).t(), View::rm(&dg, 3 * h), &mut g[l.gru_w.clone()], 3 * h, 1.0);
        sum_rows_into(n, 3 * h, &dg, &mut g[l.gru_b.clone()]);
        let mut dm = vec![0.0; n * h];
        mm(n, 3 * h, h, View::rm(&dg, 3 * h), View::rm(w, 3 * h).t(), &mut dm, h, 0.0);
        let s = gather(batch, hp, &trace.pos, h);
        mm(w6, n, h, View::rm(&s, w6).t(), View::rm(&dm, h), &mut g[l.message.clone()], h, 1.0);
        let mut dsg = vec![0.0; n * w6];
        mm(n, h, w6, View::rm(&dm, h), View::rm(a, h).t(), &mut dsg, w6, 0.0);
        for (k, routes) in batch.routes.iter().enumerate() {
            for rt in routes {
                let src = &dsg[rt.to as usize * w6 + k * h..][..h];
                let p = &trace.pos[rt.position as usize * h..][..h];
                let dst = &mut dhp[rt.from as usize * h..][..h];
                for j in 0..h {
                    dst[j] += src[j] * p[j];
                }
            }
        }
        dh = dhp;
    }

    for v in 0..n {
        let start = l.embedding.start + batch.tokens[v] as usize * d;
        for j in 0..d {
            g[start + j] += dh0[v * h + j] + dh[v * h + j];
        }
    }
    Ok((loss, g))
}
