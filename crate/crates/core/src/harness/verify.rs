//! Finite-difference verification suite: every tape op in isolation, then the full joint loss.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::model::VgaModel;
use crate::datamodel::{synth_generate, SynthConfig};
use crate::error::Result;
use crate::tensorcore::{
    grad_check, AttentionParams, GradCheckOptions, GradCheckReport, ParamStore, Tape, Tensor, Var,
    LEAKY_SLOPE,
};
use crate::vision::SrmBank;

/// Tolerance for ops that are linear in their inputs.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
pub const NONLINEAR_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub linear: bool,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.report.passed())
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.report.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn full_model(&self) -> Option<&SuiteEntry> {
        self.entries.iter().find(|e| e.name == "joint_loss")
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:<16} {}", e.name, e.report)?;
        }
        write!(
            f,
            "{} max_rel_error={:.3e} checks={} elapsed={:.2}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error(),
            self.entries.len(),
            self.elapsed.as_secs_f64()
        )
    }
}

/// Entries uniform in ±[0.2, 1], away from activation kinks.
fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.2..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

type OpFn = fn(&mut Tape, &[Var]) -> Result<Var>;

fn op_cases() -> Vec<(&'static str, bool, Vec<Vec<usize>>, OpFn)> {
    vec![
        ("matmul", true, vec![vec![3, 4], vec![4, 2]], |t, x| {
            t.matmul(x[0], x[1])
        }),
        ("matmul_bt", true, vec![vec![3, 4], vec![2, 4]], |t, x| {
            t.matmul_bt(x[0], x[1])
        }),
        (
            "affine",
            true,
            vec![vec![2, 3], vec![3, 2], vec![2]],
            |t, x| t.affine(x[0], x[1], x[2]),
        ),
        ("transpose", true, vec![vec![3, 4]], |t, x| {
            t.transpose(x[0])
        }),
        ("add", true, vec![vec![2, 3], vec![2, 3]], |t, x| {
            t.add(x[0], x[1])
        }),
        ("sub", true, vec![vec![2, 3], vec![2, 3]], |t, x| {
            t.sub(x[0], x[1])
        }),
        ("mul", false, vec![vec![2, 3], vec![2, 3]], |t, x| {
            t.mul(x[0], x[1])
        }),
        ("add_row", true, vec![vec![3, 4], vec![4]], |t, x| {
            t.add_row(x[0], x[1])
        }),
        ("scale_by", false, vec![vec![2, 3], vec![1, 1]], |t, x| {
            t.scale_by(x[0], x[1])
        }),
        ("affine_scalar", true, vec![vec![2, 3]], |t, x| {
            Ok(t.affine_scalar(x[0], -1.5, 0.25))
        }),
        ("leaky_relu", false, vec![vec![3, 4]], |t, x| {
            Ok(t.leaky_relu(x[0], LEAKY_SLOPE))
        }),
        ("relu", false, vec![vec![3, 4]], |t, x| Ok(t.relu(x[0]))),
        ("sigmoid", false, vec![vec![3, 4]], |t, x| {
            Ok(t.sigmoid(x[0]))
        }),
        ("softmax_rows", false, vec![vec![3, 4]], |t, x| {
            t.softmax_rows(x[0])
        }),
        (
            "concat_cols",
            true,
            vec![vec![2, 3], vec![2, 1], vec![2, 2]],
            |t, x| t.concat_cols_many(x),
        ),
        ("slice_cols", true, vec![vec![3, 5]], |t, x| {
            t.slice_cols(x[0], 1, 4)
        }),
        ("mean_rows", true, vec![vec![4, 3]], |t, x| {
            t.mean_rows(x[0])
        }),
        ("broadcast_row", true, vec![vec![3, 2]], |t, x| {
            t.broadcast_row(x[0], 1, 4)
        }),
        ("reshape", true, vec![vec![2, 6]], |t, x| {
            t.reshape(x[0], &[3, 4])
        }),
        ("sum", true, vec![vec![2, 3]], |t, x| Ok(t.sum(x[0]))),
        ("clamp_log", false, vec![vec![2, 3]], |t, x| {
            let p = t.sigmoid(x[0]);
            Ok(t.clamp_log(p, 1e-7))
        }),
        ("cosine", false, vec![vec![1, 5], vec![1, 5]], |t, x| {
            t.cosine(x[0], x[1])
        }),
        ("distance", false, vec![vec![1, 5], vec![1, 5]], |t, x| {
            t.distance(x[0], x[1])
        }),
        ("conv2d_valid", true, vec![vec![7, 6, 3]], |t, x| {
            t.conv2d_valid(x[0], SrmBank::new().kernels())
        }),
    ]
}

fn check_op(shapes: &[Vec<usize>], tol: f64, seed: u64, op: OpFn) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (i, s) in shapes.iter().enumerate() {
        store.add(format!("x{i}"), random(s, &mut rng))?;
    }
    let weights_seed = seed ^ 0x5eed;
    grad_check(
        &mut store,
        |tape, store| {
            let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
            let xs: Vec<Var> = ids.into_iter().map(|id| tape.param(store, id)).collect();
            let out = op(tape, &xs)?;
            let r = random(
                tape.value(out).shape(),
                &mut ChaCha8Rng::seed_from_u64(weights_seed),
            );
            let r = tape.constant(r);
            let p = tape.mul(out, r)?;
            Ok(tape.sum(p))
        },
        &GradCheckOptions::with_tolerance(tol),
    )
}

fn check_attention(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let attn = AttentionParams::new(&mut store, "attn", 4, 2, seed)?;
    let q = store.add("q", random(&[2, 4], &mut rng))?;
    let kv = store.add("kv", random(&[3, 4], &mut rng))?;
    let r = random(&[2, 4], &mut rng);
    grad_check(
        &mut store,
        |tape, store| {
            let (qv, kvv) = (tape.param(store, q), tape.param(store, kv));
            let out = attn.forward(tape, store, qv, kvv)?;
            let rv = tape.constant(r.clone());
            let p = tape.mul(out, rv)?;
            Ok(tape.sum(p))
        },
        &GradCheckOptions::with_tolerance(NONLINEAR_TOLERANCE),
    )
}

/// Configuration of the full-model check: hidden width 16, two heads, eight-wide embeddings.
pub fn suite_model_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 8,
        dim: 16,
        heads: 2,
        patch_size: 4,
        enc_dim: 8,
        seed,
        ..Default::default()
    }
}

/// Mean joint loss of a fresh model over a 3-claim synthetic batch, checked in evaluation mode.
pub fn check_joint_loss(seed: u64) -> Result<GradCheckReport> {
    let ds = synth_generate(
        &SynthConfig {
            dim: 8,
            image_size: 12,
            visual_dim: 8,
            min_nodes: 2,
            max_nodes: 5,
            ocr_rate: 1.0,
            ..SynthConfig::balanced(3)
        },
        seed,
    )?;
    let model = VgaModel::new(suite_model_config(seed))?;
    let batch = model.prepare_all(&ds)?;
    let mut store = model.store.clone();
    grad_check(
        &mut store,
        |tape, store| {
            let mut losses = Vec::with_capacity(batch.len());
            for c in &batch {
                losses.push(model.forward_with::<ChaCha8Rng>(store, tape, c, None)?.loss);
            }
            let cat = tape.concat_cols_many(&losses)?;
            let total = tape.sum(cat);
            Ok(tape.scale(total, 1.0 / batch.len() as f64))
        },
        &GradCheckOptions::with_tolerance(NONLINEAR_TOLERANCE),
    )
}

pub fn gradcheck_suite(seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut entries = Vec::new();
    for (i, (name, linear, shapes, op)) in op_cases().into_iter().enumerate() {
        let tol = if linear {
            LINEAR_TOLERANCE
        } else {
            NONLINEAR_TOLERANCE
        };
        entries.push(SuiteEntry {
            name: name.into(),
            linear,
            report: check_op(&shapes, tol, seed.wrapping_add(i as u64), op)?,
        });
    }
    entries.push(SuiteEntry {
        name: "attention".into(),
        linear: false,
        report: check_attention(seed)?,
    });
    entries.push(SuiteEntry {
        name: "joint_loss".into(),
        linear: false,
        report: check_joint_loss(seed)?,
    });
    Ok(SuiteReport {
        entries,
        elapsed: start.elapsed(),
    })
}
