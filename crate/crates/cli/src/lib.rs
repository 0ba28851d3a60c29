//! Command-line front end: loads JSON inputs, calls the library, writes
//! JSON or short text reports.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, missing
//! inputs, inconsistent shapes), 3 for data errors (malformed or invalid
//! file contents).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bectra::{
    bertctc_decode, best_path_decode, ctc_grad, ctc_loss, detokenize, estimate_length,
    grad_wrt_logits, retokenize, rnnt_grad, rnnt_grad_wrt_logits, rnnt_loss, sample_mask,
    BeamConfig, Bectra, BectraDecodeConfig, BertCtcOutput, BigramLm, EmissionMatrix, Error,
    FeatureMatrix, FrameEmitter, Fusion, Hypothesis, JointLattice, LinearConcatEmitter,
    NormalizeFlags, RefinementTrace, Rng, RowNormalize, TableJointEmitter, TableMaskedLm, TokenSeq,
    Vocab,
};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "bectra",
    version,
    about = "CTC, transducer, BERT-CTC and BECTRA losses and decoders"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// ASR-vocabulary JSON
    #[arg(long, global = true)]
    vocab_asr: Option<PathBuf>,
    /// Masked-LM vocabulary JSON
    #[arg(long, global = true)]
    vocab_bert: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print machine-readable JSON instead of text
    #[arg(long, global = true)]
    json_out: bool,
    /// Text normalization: comma-separated subset of `punct` and `case`
    /// (`punct` strips ASCII punctuation)
    #[arg(long, global = true, value_parser = parse_normalize, default_value = "")]
    normalize: NormalizeFlags,
}

fn parse_normalize(s: &str) -> Result<NormalizeFlags, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Wrt {
    LogProbs,
    Logits,
}

#[derive(Args, Debug)]
struct SearchOpts {
    #[arg(long, default_value_t = bectra::transducer::DEFAULT_MAX_SYMBOLS_PER_FRAME)]
    max_symbols_per_frame: usize,
    /// Bigram LM JSON for shallow fusion
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lm_weight: f64,
}

#[derive(Args, Debug)]
struct RefineOpts {
    /// Encoder output H (FeatureMatrix JSON)
    #[arg(long, conflicts_with = "utterances")]
    features: Option<PathBuf>,
    /// JSON list of {id, H_path, aux_emissions_path, ref_text}
    #[arg(long)]
    utterances: Option<PathBuf>,
    /// Masked-LM table JSON
    #[arg(long)]
    mlm: PathBuf,
    /// Conditioned emitter JSON ({"acoustic", "context"})
    #[arg(long)]
    emitter: PathBuf,
    /// Initial hypothesis length
    #[arg(long)]
    init_len: Option<usize>,
    /// Auxiliary ASR-vocabulary emissions used to estimate the initial length
    #[arg(long)]
    aux_emissions: Option<PathBuf>,
    /// Write the refinement trace as JSON
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads across utterances
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CTC negative log-likelihood of a target
    CtcLoss {
        #[arg(long)]
        emissions: PathBuf,
        /// Space-separated target tokens
        #[arg(long, allow_hyphen_values = true)]
        target: String,
    },
    /// Gradient of the CTC loss
    CtcGrad {
        #[arg(long)]
        emissions: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long, value_enum, default_value_t = Wrt::LogProbs)]
        wrt: Wrt,
    },
    /// Best-path CTC decoding
    CtcDecode {
        #[arg(long)]
        emissions: PathBuf,
    },
    /// Transducer negative log-likelihood of a target
    RnntLoss {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
    },
    /// Gradient of the transducer loss
    RnntGrad {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long, value_enum, default_value_t = Wrt::LogProbs)]
        wrt: Wrt,
    },
    /// Transducer beam search
    RnntDecode {
        /// Prefix-independent emissions, one row per frame
        #[arg(long, required_unless_present = "joint", conflicts_with = "joint")]
        emissions: Option<PathBuf>,
        /// Joint network JSON ({"weights", "bigram"}), used with --features
        #[arg(long, requires = "features")]
        joint: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        beam: usize,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Mask-predict decoding over the masked-LM vocabulary
    BertctcDecode {
        #[command(flatten)]
        refine: RefineOpts,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
    },
    /// Mask-predict refinement followed by transducer beam search
    BectraDecode {
        #[command(flatten)]
        refine: RefineOpts,
        /// Joint network JSON ({"weights", "bigram"})
        #[arg(long)]
        joint: PathBuf,
        #[arg(long, default_value_t = bectra::bectra::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long, default_value_t = bectra::bectra::DEFAULT_BEAM)]
        beam: usize,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Draw a training mask for a masked-LM target
    SampleMask {
        #[arg(long, allow_hyphen_values = true)]
        target: String,
    },
    /// Convert tokens between the two vocabularies
    Retokenize {
        #[arg(long, allow_hyphen_values = true)]
        tokens: String,
        /// Vocabulary the input tokens belong to
        #[arg(long, value_enum, default_value_t = Side::Bert)]
        from: Side,
    },
    /// Masked-LM length of the best-path transcript of auxiliary emissions
    EstimateLength {
        #[arg(long)]
        aux_emissions: PathBuf,
    },
    /// Word (or character) error rate between two text files, one
    /// utterance per line
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        cer: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Side {
    Asr,
    Bert,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            if e.kind() == ErrorKind::InvalidSubcommand {
                let _ = write!(sink, "\n{}", Cli::command().render_help());
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let text = if cli.common.json_out {
                serde_json::to_string_pretty(&report.json).expect("reports serialize") + "\n"
            } else {
                report.text
            };
            match out.write_all(text.as_bytes()) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_DATA
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

struct Report {
    json: Value,
    text: String,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// JSON number, or null for non-finite values.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn load_vocab(path: &Option<PathBuf>, flag: &str) -> Result<Vocab, Error> {
    let path = path
        .as_ref()
        .ok_or_else(|| usage(format!("--{flag} is required for this command")))?;
    Vocab::load(path)
}

fn load_emissions(path: &Path) -> Result<EmissionMatrix, Error> {
    let e = EmissionMatrix::load(path)?;
    if e.is_normalized() {
        Ok(e)
    } else {
        e.normalize_rows()
    }
}

fn load_lattice(path: &Path) -> Result<JointLattice, Error> {
    let l = JointLattice::load(path)?;
    if l.is_normalized() {
        Ok(l)
    } else {
        l.normalize_rows()
    }
}

fn parse_target(text: &str, vocab: &Vocab) -> Result<TokenSeq, Error> {
    let pieces: Vec<&str> = text.split_whitespace().collect();
    vocab.seq_from_strs(&pieces)
}

fn hypothesis_json(h: &Hypothesis, vocab: &Vocab) -> Value {
    json!({
        "tokens": vocab.render(h.ids()),
        "ids": h.ids(),
        "text": detokenize(&h.tokens, vocab).ok(),
        "score": num(h.score),
        "confidences": h.confidences.as_deref().map(nums),
    })
}

fn hypothesis_text(h: &Hypothesis, vocab: &Vocab) -> String {
    format!("{}\t{:.6}\n", vocab.render(h.ids()).join(" "), h.score)
}

fn loss_report(loss: f64) -> Report {
    let text = if loss.is_finite() {
        format!("loss {loss}\n")
    } else {
        "loss inf (target infeasible)\n".to_string()
    };
    Report {
        json: json!({ "loss": num(loss), "feasible": loss.is_finite() }),
        text,
    }
}

fn execute(cli: &Cli) -> Result<Report, Error> {
    let c = &cli.common;
    match &cli.command {
        Command::CtcLoss { emissions, target } => {
            let v = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let e = load_emissions(emissions)?;
            let w = parse_target(target, &v)?;
            Ok(loss_report(ctc_loss(&e, &w, &v)?))
        }
        Command::CtcGrad {
            emissions,
            target,
            wrt,
        } => {
            let v = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let e = load_emissions(emissions)?;
            let w = parse_target(target, &v)?;
            let mut g = ctc_grad(&e, &w, &v)?;
            if let Wrt::Logits = wrt {
                g = grad_wrt_logits(&e, &g);
            }
            Ok(grad_report(&g, &[e.rows(), e.cols()], *wrt))
        }
        Command::CtcDecode { emissions } => {
            let v = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let e = load_emissions(emissions)?;
            let h = best_path_decode(&e, &v)?;
            Ok(Report {
                json: hypothesis_json(&h, &v),
                text: hypothesis_text(&h, &v),
            })
        }
        Command::RnntLoss { lattice, target } => {
            let v = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let l = load_lattice(lattice)?;
            let w = parse_target(target, &v)?;
            Ok(loss_report(rnnt_loss(&l, &w, &v)?))
        }
        Command::RnntGrad {
            lattice,
            target,
            wrt,
        } => {
            let v = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let l = load_lattice(lattice)?;
            let w = parse_target(target, &v)?;
            let mut g = rnnt_grad(&l, &w, &v)?;
            if let Wrt::Logits = wrt {
                g = rnnt_grad_wrt_logits(&l, &g);
            }
            Ok(grad_report(&g, &[l.frames(), l.u_rows(), l.cols()], *wrt))
        }
        Command::RnntDecode {
            emissions,
            joint,
            features,
            beam,
            search,
        } => {
            let v = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let lm = load_lm(search, &v)?;
            let config = BeamConfig {
                beam: *beam,
                max_symbols_per_frame: search.max_symbols_per_frame,
                max_output_len: None,
            };
            let fusion = lm.as_ref().map(|lm| Fusion {
                lm,
                weight: search.lm_weight,
            });
            let hyps = match (emissions, joint, features) {
                (Some(e), _, _) => {
                    let em = FrameEmitter::new(load_emissions(e)?)?;
                    bectra::beam_search(&em, em.frames(), &v, &config, fusion)?
                }
                (None, Some(j), Some(f)) => {
                    let joint = TableJointEmitter::load(j, &v)?;
                    let feats = FeatureMatrix::load(f)?;
                    check_joint_dim(&joint, &feats)?;
                    let src = bectra::ConditionedJoint::new(&joint, &feats);
                    bectra::beam_search(&src, feats.rows(), &v, &config, fusion)?
                }
                _ => return Err(usage("give --emissions, or --joint with --features")),
            };
            Ok(Report {
                json: json!({ "hypotheses": hyps.iter().map(|h| hypothesis_json(h, &v)).collect::<Vec<_>>() }),
                text: hyps.iter().map(|h| hypothesis_text(h, &v)).collect(),
            })
        }
        Command::BertctcDecode { refine, iterations } => {
            let vb = load_vocab(&c.vocab_bert, "vocab-bert")?;
            let stack = RefineStack::load(refine, vb)?;
            decode_all(
                refine,
                c,
                &stack,
                |h, init| {
                    let out = bertctc_decode(h, *iterations, &stack.emitter, &stack.lm, init)?;
                    Ok((out.hypothesis.clone(), out))
                },
                &stack.vocab_bert,
            )
        }
        Command::BectraDecode {
            refine,
            joint,
            iterations,
            beam,
            search,
        } => {
            let vb = load_vocab(&c.vocab_bert, "vocab-bert")?;
            let va = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let stack = RefineStack::load(refine, vb)?;
            let joint = TableJointEmitter::load(joint, &va)?;
            if joint.dim() != stack.emitter_feature_dim() {
                return Err(usage(format!(
                    "joint expects {}-dim frames, encoder plus embedding width is {}",
                    joint.dim(),
                    stack.emitter_feature_dim()
                )));
            }
            let lm = load_lm(search, &va)?;
            let model = Bectra {
                emitter: &stack.emitter,
                lm: &stack.lm,
                joint: &joint,
                vocab_asr: &va,
            };
            let config = BectraDecodeConfig {
                iterations: *iterations,
                beam: BeamConfig {
                    beam: *beam,
                    max_symbols_per_frame: search.max_symbols_per_frame,
                    max_output_len: None,
                },
            };
            decode_all(
                refine,
                c,
                &stack,
                |h, init| {
                    let fusion = lm.as_ref().map(|lm| Fusion {
                        lm,
                        weight: search.lm_weight,
                    });
                    let out = model.decode(h, init, &config, fusion)?;
                    Ok((out.hypothesis, out.intermediate))
                },
                &va,
            )
        }
        Command::SampleMask { target } => {
            let vb = load_vocab(&c.vocab_bert, "vocab-bert")?;
            let w = parse_target(target, &vb)?;
            let masked = sample_mask(&w, &vb, &mut Rng::new(c.seed))?;
            Ok(Report {
                json: json!({
                    "seed": c.seed,
                    "tokens": vb.render(masked.ids()),
                    "masked_positions": masked.masked_positions(),
                }),
                text: vb.render(masked.ids()).join(" ") + "\n",
            })
        }
        Command::Retokenize { tokens, from } => {
            let va = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let vb = load_vocab(&c.vocab_bert, "vocab-bert")?;
            let (src, dst) = match from {
                Side::Asr => (&va, &vb),
                Side::Bert => (&vb, &va),
            };
            let w = parse_target(tokens, src)?;
            let r = retokenize(&w, src, dst, c.normalize)?;
            let text = detokenize(&r, dst)?;
            Ok(Report {
                json: json!({ "tokens": dst.render(r.ids()), "ids": r.ids(), "text": text }),
                text: dst.render(r.ids()).join(" ") + "\n",
            })
        }
        Command::EstimateLength { aux_emissions } => {
            let va = load_vocab(&c.vocab_asr, "vocab-asr")?;
            let vb = load_vocab(&c.vocab_bert, "vocab-bert")?;
            let aux = load_emissions(aux_emissions)?;
            let n = estimate_length(&aux, &va, &vb, c.normalize)?;
            Ok(Report {
                json: json!({ "length": n }),
                text: format!("{n}\n"),
            })
        }
        Command::Eval {
            reference,
            hyp,
            cer,
        } => eval(reference, hyp, *cer, c.normalize),
    }
}

fn grad_report(g: &[f64], shape: &[usize], wrt: Wrt) -> Report {
    let last = *shape.last().expect("non-empty shape");
    let rows: Vec<Value> = g.chunks(last).map(nums).collect();
    let nested = if shape.len() == 3 {
        Value::Array(
            rows.chunks(shape[1])
                .map(|c| Value::Array(c.to_vec()))
                .collect(),
        )
    } else {
        Value::Array(rows)
    };
    let text = g
        .chunks(last)
        .map(|r| {
            r.iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join(" ")
                + "\n"
        })
        .collect();
    let wrt = match wrt {
        Wrt::LogProbs => "log_probs",
        Wrt::Logits => "logits",
    };
    Report {
        json: json!({ "shape": shape, "wrt": wrt, "grad": nested }),
        text,
    }
}

fn load_lm(search: &SearchOpts, vocab: &Vocab) -> Result<Option<BigramLm>, Error> {
    if search.lm_weight.is_nan() || search.lm_weight < 0.0 {
        return Err(usage("--lm-weight must be non-negative"));
    }
    match &search.lm {
        Some(p) => Ok(Some(BigramLm::load(p, vocab)?)),
        None if search.lm_weight > 0.0 => Err(usage("--lm-weight needs --lm")),
        None => Ok(None),
    }
}

fn check_joint_dim(joint: &TableJointEmitter, feats: &FeatureMatrix) -> Result<(), Error> {
    if joint.dim() != feats.dim() {
        return Err(usage(format!(
            "joint expects {}-dim frames, features have {}",
            joint.dim(),
            feats.dim()
        )));
    }
    Ok(())
}

struct RefineStack {
    vocab_bert: Vocab,
    lm: TableMaskedLm,
    emitter: LinearConcatEmitter,
    h_dim: usize,
    e_dim: usize,
}

#[derive(Deserialize)]
struct EmitterShape {
    acoustic: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
}

impl RefineStack {
    fn load(opts: &RefineOpts, vocab_bert: Vocab) -> Result<Self, Error> {
        let lm = TableMaskedLm::load(&opts.mlm, vocab_bert.clone())?;
        let raw = std::fs::read_to_string(&opts.emitter)?;
        let shape: EmitterShape = serde_json::from_str(&raw)?;
        let emitter = LinearConcatEmitter::new(shape.acoustic.clone(), shape.context.clone())?;
        if emitter.cols() != vocab_bert.len() {
            return Err(usage(format!(
                "emitter has {} columns, masked-LM vocabulary has {}",
                emitter.cols(),
                vocab_bert.len()
            )));
        }
        if shape.context.len() != bectra::MaskedLm::dim(&lm) {
            return Err(usage(
                "emitter context rows must match the masked-LM embedding width",
            ));
        }
        Ok(Self {
            vocab_bert,
            lm,
            emitter,
            h_dim: shape.acoustic.len(),
            e_dim: shape.context.len(),
        })
    }

    fn emitter_feature_dim(&self) -> usize {
        self.h_dim + self.e_dim
    }
}

#[derive(Deserialize)]
struct Utterance {
    id: String,
    #[serde(rename = "H_path")]
    h_path: PathBuf,
    #[serde(default)]
    aux_emissions_path: Option<PathBuf>,
    #[serde(default)]
    ref_text: Option<String>,
}

struct Job {
    id: String,
    h: PathBuf,
    aux: Option<PathBuf>,
    reference: Option<String>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn jobs(opts: &RefineOpts) -> Result<(Vec<Job>, bool), Error> {
    match (&opts.features, &opts.utterances) {
        (Some(h), None) => Ok((
            vec![Job {
                id: "0".into(),
                h: h.clone(),
                aux: opts.aux_emissions.clone(),
                reference: None,
            }],
            false,
        )),
        (None, Some(list)) => {
            let base = list.parent().unwrap_or(Path::new("."));
            let utts: Vec<Utterance> = serde_json::from_str(&std::fs::read_to_string(list)?)?;
            let jobs = utts
                .into_iter()
                .map(|u| Job {
                    id: u.id,
                    h: resolve(base, &u.h_path),
                    aux: u.aux_emissions_path.map(|p| resolve(base, &p)),
                    reference: u.ref_text,
                })
                .collect();
            Ok((jobs, true))
        }
        _ => Err(usage("give exactly one of --features or --utterances")),
    }
}

struct Decoded {
    id: String,
    hypothesis: Hypothesis,
    trace: RefinementTrace,
    reference: Option<String>,
}

/// Decodes every job, in parallel across utterances when `--jobs` > 1.
/// Results keep the input order, so output does not depend on scheduling.
fn decode_all<F>(
    opts: &RefineOpts,
    common: &Common,
    stack: &RefineStack,
    decode: F,
    out_vocab: &Vocab,
) -> Result<Report, Error>
where
    F: Fn(&FeatureMatrix, usize) -> Result<(Hypothesis, BertCtcOutput), Error> + Sync,
{
    if opts.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let (jobs, batch) = jobs(opts)?;
    let vocab_asr = match &common.vocab_asr {
        Some(p) => Some(Vocab::load(p)?),
        None => None,
    };
    let one = |job: &Job| -> Result<Decoded, Error> {
        let h = FeatureMatrix::load(&job.h)?;
        if h.dim() != stack.h_dim {
            return Err(usage(format!(
                "utterance {}: encoder width {} does not match emitter {}",
                job.id,
                h.dim(),
                stack.h_dim
            )));
        }
        let init = match (opts.init_len, &job.aux) {
            (Some(n), _) => n,
            (None, Some(aux)) => {
                let va = vocab_asr
                    .as_ref()
                    .ok_or_else(|| usage("length estimation needs --vocab-asr"))?;
                estimate_length(
                    &load_emissions(aux)?,
                    va,
                    &stack.vocab_bert,
                    common.normalize,
                )?
            }
            (None, None) => return Err(usage("give --init-len or auxiliary emissions")),
        };
        let (hypothesis, refined) = decode(&h, init)?;
        Ok(Decoded {
            id: job.id.clone(),
            hypothesis,
            trace: refined.trace,
            reference: job.reference.clone(),
        })
    };
    let results: Vec<Result<Decoded, Error>> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| usage(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(one).collect())
    } else {
        jobs.iter().map(one).collect()
    };
    let decoded = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    if let Some(path) = &opts.trace {
        let trace = if batch {
            Value::Object(
                decoded
                    .iter()
                    .map(|d| {
                        (
                            d.id.clone(),
                            serde_json::to_value(&d.trace).expect("trace serializes"),
                        )
                    })
                    .collect(),
            )
        } else {
            serde_json::to_value(&decoded[0].trace).expect("trace serializes")
        };
        std::fs::write(path, serde_json::to_string_pretty(&trace)? + "\n")?;
    }

    if !batch {
        let h = &decoded[0].hypothesis;
        return Ok(Report {
            json: hypothesis_json(h, out_vocab),
            text: hypothesis_text(h, out_vocab),
        });
    }

    let mut rows = Vec::new();
    let mut text = String::new();
    let (mut errors, mut words) = (0usize, 0usize);
    for d in &decoded {
        let hyp_text = detokenize(&d.hypothesis.tokens, out_vocab)?;
        let wer = match &d.reference {
            Some(r) => {
                let rate = bectra::wer(r, &hyp_text, common.normalize)?;
                errors += rate.counts.distance;
                words += rate.reference_len;
                Some(rate)
            }
            None => None,
        };
        text.push_str(&format!("{}\t{}\n", d.id, hyp_text));
        let mut row = hypothesis_json(&d.hypothesis, out_vocab);
        row["id"] = json!(d.id);
        row["wer"] = serde_json::to_value(wer)?;
        rows.push(row);
    }
    let corpus = (words > 0).then(|| errors as f64 / words as f64);
    if let Some(w) = corpus {
        text.push_str(&format!("wer {w:.4}\n"));
    }
    Ok(Report {
        json: json!({ "utterances": rows, "wer": corpus }),
        text,
    })
}

fn eval(reference: &Path, hyp: &Path, cer: bool, flags: NormalizeFlags) -> Result<Report, Error> {
    let refs = std::fs::read_to_string(reference)?;
    let hyps = std::fs::read_to_string(hyp)?;
    let refs: Vec<&str> = refs.lines().collect();
    let hyps: Vec<&str> = hyps.lines().collect();
    if refs.len() != hyps.len() {
        return Err(Error::Data(format!(
            "{} reference lines but {} hypothesis lines",
            refs.len(),
            hyps.len()
        )));
    }
    let mut total = bectra::EditCounts::default();
    let mut len = 0;
    for (r, h) in refs.iter().zip(&hyps) {
        let rate = if cer {
            bectra::cer(r, h, flags)?
        } else {
            bectra::wer(r, h, flags)?
        };
        total.distance += rate.counts.distance;
        total.substitutions += rate.counts.substitutions;
        total.insertions += rate.counts.insertions;
        total.deletions += rate.counts.deletions;
        len += rate.reference_len;
    }
    if len == 0 {
        return Err(Error::Domain("no reference utterances".into()));
    }
    let rate = total.distance as f64 / len as f64;
    let name = if cer { "cer" } else { "wer" };
    Ok(Report {
        json: json!({
            name: rate,
            "utterances": refs.len(),
            "reference_len": len,
            "distance": total.distance,
            "substitutions": total.substitutions,
            "insertions": total.insertions,
            "deletions": total.deletions,
        }),
        text: format!(
            "{name} {rate:.4} ({}/{len}; S={} I={} D={})\n",
            total.distance, total.substitutions, total.insertions, total.deletions
        ),
    })
}
