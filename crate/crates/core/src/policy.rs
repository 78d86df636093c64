//! Tiny differentiable autoregressive token model.
//!
//! The policy conditions on pooled features of the prompt and of the
//! generated prefix (an exponentially decayed embedding sum, decay 0.9
//! oldest-first), plus a normalized position and a phase flag. One tanh
//! hidden layer maps the feature vector to logits over the full
//! vocabulary; out-of-phase tokens are excluded from the softmax
//! normalizer, so their probability is exactly zero. Log-probabilities
//! use max-shifted log-sum-exp. Gradients are reverse-mode and exact,
//! which keeps finite-difference verification meaningful.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::CoreError;
use crate::{rng, Token};

/// Embedding width.
pub const EMBED_DIM: usize = 16;
/// Hidden layer width.
pub const HIDDEN_DIM: usize = 32;
/// Feature vector width: prompt mean + decayed prefix sum + position + phase.
pub const STATE_DIM: usize = 2 * EMBED_DIM + 2;
/// Maximum semantic (CoT) tokens per rollout, end marker included.
pub const S_MAX: usize = 64;
/// Scene tokens per rollout.
pub const SCENE_LEN: usize = 16;
/// Decay applied oldest-first to the generated-prefix embedding sum.
pub const PREFIX_DECAY: f64 = 0.9;
/// Parameter-format version tag.
pub const PARAMS_VERSION: u32 = 1;

fn exp(x: f64) -> f64 {
    libm::exp(x)
}

fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Generation phase: variable-length semantic plan, then fixed scene block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Semantic,
    Scene,
}

/// Sizes of the three disjoint token id ranges, in id order:
/// prompt ids first, then semantic, then scene. The end-of-CoT marker is
/// the last semantic id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabSpec {
    pub prompt: usize,
    pub semantic: usize,
    pub scene: usize,
}

impl VocabSpec {
    pub fn total(&self) -> usize {
        self.prompt + self.semantic + self.scene
    }

    pub fn end_of_cot(&self) -> Token {
        (self.prompt + self.semantic - 1) as Token
    }

    /// `(first id, range length)` of the tokens a phase may emit.
    pub fn phase_range(&self, phase: Phase) -> (usize, usize) {
        match phase {
            Phase::Semantic => (self.prompt, self.semantic),
            Phase::Scene => (self.prompt + self.semantic, self.scene),
        }
    }

    pub fn in_phase(&self, token: Token, phase: Phase) -> bool {
        let (base, len) = self.phase_range(phase);
        (token as usize) >= base && (token as usize) < base + len
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.prompt == 0 || self.semantic == 0 || self.scene == 0 {
            return Err(CoreError::InvalidConfig(
                "vocabulary ranges must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

/// All learnable parameters, stored flat in checkpoint order:
/// embeddings (total x EMBED_DIM, row-major), hidden weights
/// (STATE_DIM x HIDDEN_DIM, row-major), hidden bias, output weights
/// (HIDDEN_DIM x total, row-major), output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub vocab: VocabSpec,
    pub version: u32,
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn param_count(vocab: &VocabSpec) -> usize {
        let total = vocab.total();
        total * EMBED_DIM + STATE_DIM * HIDDEN_DIM + HIDDEN_DIM + HIDDEN_DIM * total + total
    }

    pub fn zeros(vocab: VocabSpec) -> Self {
        PolicyParams {
            vocab,
            version: PARAMS_VERSION,
            values: vec![0.0; Self::param_count(&vocab)],
        }
    }

    #[inline]
    pub fn emb_offset(&self) -> usize {
        0
    }

    #[inline]
    pub fn wh_offset(&self) -> usize {
        self.vocab.total() * EMBED_DIM
    }

    #[inline]
    pub fn bh_offset(&self) -> usize {
        self.wh_offset() + STATE_DIM * HIDDEN_DIM
    }

    #[inline]
    pub fn wo_offset(&self) -> usize {
        self.bh_offset() + HIDDEN_DIM
    }

    #[inline]
    pub fn bo_offset(&self) -> usize {
        self.wo_offset() + HIDDEN_DIM * self.vocab.total()
    }

    #[inline]
    pub fn emb_row(&self, token: Token) -> &[f64] {
        let start = token as usize * EMBED_DIM;
        &self.values[start..start + EMBED_DIM]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Draws parameters i.i.d. uniform in [-0.05, 0.05] from the seeded
/// stream, in flat layout order.
pub fn init_params(vocab: VocabSpec, seed: u64) -> Result<PolicyParams, CoreError> {
    vocab.validate()?;
    let mut stream = rng::stream(seed);
    let n = PolicyParams::param_count(&vocab);
    let values = (0..n).map(|_| stream.gen::<f64>() * 0.1 - 0.05).collect();
    Ok(PolicyParams {
        vocab,
        version: PARAMS_VERSION,
        values,
    })
}

// ---------------------------------------------------------------------------
// Forward machinery
// ---------------------------------------------------------------------------

/// Incremental feature builder over one generated sequence.
pub(crate) struct Walker<'a> {
    params: &'a PolicyParams,
    prompt_mean: [f64; EMBED_DIM],
    decay: [f64; EMBED_DIM],
    generated: usize,
}

impl<'a> Walker<'a> {
    pub(crate) fn new(params: &'a PolicyParams, prompt: &[Token]) -> Self {
        let mut prompt_mean = [0.0; EMBED_DIM];
        if !prompt.is_empty() {
            for &t in prompt {
                let row = params.emb_row(t);
                for (m, r) in prompt_mean.iter_mut().zip(row) {
                    *m += r;
                }
            }
            let inv = 1.0 / prompt.len() as f64;
            for m in prompt_mean.iter_mut() {
                *m *= inv;
            }
        }
        Walker {
            params,
            prompt_mean,
            decay: [0.0; EMBED_DIM],
            generated: 0,
        }
    }

    /// Feature vector for the next position in the given phase.
    pub(crate) fn state(&self, phase: Phase) -> [f64; STATE_DIM] {
        let mut s = [0.0; STATE_DIM];
        s[..EMBED_DIM].copy_from_slice(&self.prompt_mean);
        s[EMBED_DIM..2 * EMBED_DIM].copy_from_slice(&self.decay);
        s[2 * EMBED_DIM] = self.generated as f64 / (S_MAX + SCENE_LEN) as f64;
        s[2 * EMBED_DIM + 1] = match phase {
            Phase::Semantic => 0.0,
            Phase::Scene => 1.0,
        };
        s
    }

    /// Appends a generated token: `decay <- PREFIX_DECAY * decay + emb(token)`.
    pub(crate) fn advance(&mut self, token: Token) {
        let row = self.params.emb_row(token);
        for (d, r) in self.decay.iter_mut().zip(row) {
            *d = PREFIX_DECAY * *d + r;
        }
        self.generated += 1;
    }
}

pub(crate) fn hidden_from_state(params: &PolicyParams, state: &[f64]) -> [f64; HIDDEN_DIM] {
    let wh = &params.values[params.wh_offset()..params.bh_offset()];
    let bh = &params.values[params.bh_offset()..params.wo_offset()];
    let mut pre = [0.0; HIDDEN_DIM];
    pre.copy_from_slice(bh);
    for (i, &s) in state.iter().enumerate() {
        let row = &wh[i * HIDDEN_DIM..(i + 1) * HIDDEN_DIM];
        for (p, w) in pre.iter_mut().zip(row) {
            *p += s * w;
        }
    }
    let mut h = [0.0; HIDDEN_DIM];
    for (o, p) in h.iter_mut().zip(pre.iter()) {
        *o = libm::tanh(*p);
    }
    h
}

/// Log-probabilities over the phase range: logits restricted to the range,
/// normalized by max-shifted log-sum-exp over that range only.
pub(crate) fn range_log_softmax(
    params: &PolicyParams,
    hidden: &[f64; HIDDEN_DIM],
    phase: Phase,
) -> (usize, Vec<f64>) {
    let (base, len) = params.vocab.phase_range(phase);
    let total = params.vocab.total();
    let wo = &params.values[params.wo_offset()..params.bo_offset()];
    let bo = &params.values[params.bo_offset()..];
    let mut logits = Vec::with_capacity(len);
    logits.extend_from_slice(&bo[base..base + len]);
    for (q, &hq) in hidden.iter().enumerate() {
        let row = &wo[q * total + base..q * total + base + len];
        for (l, w) in logits.iter_mut().zip(row) {
            *l += hq * w;
        }
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for &l in &logits {
        sum += exp(l - max);
    }
    let lse = max + ln(sum);
    for l in logits.iter_mut() {
        *l -= lse;
    }
    (base, logits)
}

/// Masked logit vector over the full vocabulary: tokens outside the
/// phase's range carry probability exactly zero, represented as `-inf`
/// (they are excluded from the softmax normalizer, never exponentiated).
pub fn forward_logits(
    params: &PolicyParams,
    state: &[f64],
    phase: Phase,
) -> Result<Vec<f64>, CoreError> {
    assert_eq!(state.len(), STATE_DIM, "state vector has wrong width");
    if state.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "context state",
        });
    }
    let mut st = [0.0; STATE_DIM];
    st.copy_from_slice(state);
    let hidden = hidden_from_state(params, &st);
    let (base, len) = params.vocab.phase_range(phase);
    let total = params.vocab.total();
    let wo = &params.values[params.wo_offset()..params.bo_offset()];
    let bo = &params.values[params.bo_offset()..];
    let mut out = vec![f64::NEG_INFINITY; total];
    for v in base..base + len {
        let mut z = bo[v];
        for (q, &hq) in hidden.iter().enumerate() {
            z += hq * wo[q * total + v];
        }
        out[v] = z;
    }
    Ok(out)
}

/// Feature vector for the next position: prompt-mean embedding, the
/// decayed generated-prefix sum, normalized position, and the phase flag.
pub fn context_state(
    params: &PolicyParams,
    prompt: &[Token],
    generated_prefix: &[Token],
    phase: Phase,
) -> Vec<f64> {
    let mut walker = Walker::new(params, prompt);
    for &t in generated_prefix {
        walker.advance(t);
    }
    walker.state(phase).to_vec()
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

/// One sampled bi-level response and its per-position log-probabilities.
///
/// `logprob_new` is recorded while sampling; `logprob_old` and
/// `logprob_ref` start empty and are filled by the trainer. All three
/// cover `semantic.len() + scene.len()` positions when populated.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub vocab: VocabSpec,
    pub prompt_tokens: Vec<Token>,
    pub semantic: Vec<Token>,
    pub scene: Vec<Token>,
    pub logprob_new: Vec<f64>,
    pub logprob_old: Vec<f64>,
    pub logprob_ref: Vec<f64>,
    pub seed: u64,
}

impl Rollout {
    pub fn total_len(&self) -> usize {
        self.semantic.len() + self.scene.len()
    }
}

/// Sampling variations used by the trainer and the evaluation harness.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleOpts {
    /// Truncate the semantic phase to this many tokens (end marker
    /// appended) before the scene phase conditions on it.
    pub cap: Option<usize>,
    /// Emit the end-of-CoT marker immediately instead of sampling the
    /// semantic phase; the scene phase then conditions on the prompt and
    /// the marker alone.
    pub force_no_cot: bool,
}

fn sample_from(logp: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &lp) in logp.iter().enumerate() {
        cum += exp(lp);
        if u < cum {
            return i;
        }
    }
    logp.len() - 1
}

/// Samples one rollout at temperature 1. The semantic and scene phases
/// draw from independent streams split from `seed`, so paired evaluations
/// (with and without CoT) share the identical scene-phase stream.
pub fn sample_rollout_opts(
    params: &PolicyParams,
    prompt: &[Token],
    seed: u64,
    opts: SampleOpts,
) -> Rollout {
    let vocab = params.vocab;
    let eoc = vocab.end_of_cot();
    let mut sem_rng = rng::stream(rng::split(seed, 0));
    let mut scene_rng = rng::stream(rng::split(seed, 1));

    let mut walker = Walker::new(params, prompt);
    let mut semantic = Vec::new();
    let mut logprob = Vec::new();

    if opts.force_no_cot {
        let state = walker.state(Phase::Semantic);
        let hidden = hidden_from_state(params, &state);
        let (base, logp) = range_log_softmax(params, &hidden, Phase::Semantic);
        logprob.push(logp[eoc as usize - base]);
        semantic.push(eoc);
        walker.advance(eoc);
    } else {
        loop {
            let state = walker.state(Phase::Semantic);
            let hidden = hidden_from_state(params, &state);
            let (base, logp) = range_log_softmax(params, &hidden, Phase::Semantic);
            let pick = sample_from(&logp, sem_rng.gen::<f64>());
            let token = (base + pick) as Token;
            semantic.push(token);
            logprob.push(logp[pick]);
            walker.advance(token);
            if token == eoc || semantic.len() == S_MAX {
                break;
            }
        }
        if let Some(n) = opts.cap {
            if semantic.len() > n {
                semantic.truncate(n);
                logprob.truncate(n);
                // Rebuild the prefix features for the truncated sequence,
                // then append the end marker with its teacher-forced
                // log-probability so the phase boundary stays well formed.
                walker = Walker::new(params, prompt);
                for &t in &semantic {
                    walker.advance(t);
                }
                let state = walker.state(Phase::Semantic);
                let hidden = hidden_from_state(params, &state);
                let (base, logp) = range_log_softmax(params, &hidden, Phase::Semantic);
                logprob.push(logp[eoc as usize - base]);
                semantic.push(eoc);
                walker.advance(eoc);
            }
        }
    }

    let mut scene = Vec::with_capacity(SCENE_LEN);
    for _ in 0..SCENE_LEN {
        let state = walker.state(Phase::Scene);
        let hidden = hidden_from_state(params, &state);
        let (base, logp) = range_log_softmax(params, &hidden, Phase::Scene);
        let pick = sample_from(&logp, scene_rng.gen::<f64>());
        let token = (base + pick) as Token;
        scene.push(token);
        logprob.push(logp[pick]);
        walker.advance(token);
    }

    Rollout {
        vocab,
        prompt_tokens: prompt.to_vec(),
        semantic,
        scene,
        logprob_new: logprob,
        logprob_old: Vec::new(),
        logprob_ref: Vec::new(),
        seed,
    }
}

/// [`sample_rollout_opts`] with default options.
pub fn sample_rollout(params: &PolicyParams, prompt: &[Token], seed: u64) -> Rollout {
    sample_rollout_opts(params, prompt, seed, SampleOpts::default())
}

fn validate_sequence(
    vocab: &VocabSpec,
    semantic: &[Token],
    scene: &[Token],
) -> Result<(), CoreError> {
    for &t in semantic {
        if !vocab.in_phase(t, Phase::Semantic) {
            return Err(CoreError::TokenOutOfRange {
                what: "semantic phase",
                token: t,
            });
        }
    }
    for &t in scene {
        if !vocab.in_phase(t, Phase::Scene) {
            return Err(CoreError::TokenOutOfRange {
                what: "scene phase",
                token: t,
            });
        }
    }
    if scene.len() != SCENE_LEN {
        return Err(CoreError::LengthMismatch {
            what: "scene sequence",
            expected: SCENE_LEN,
            got: scene.len(),
        });
    }
    Ok(())
}

/// Teacher-forced per-position log-probabilities of `(semantic, scene)`.
pub fn logprob_sequence(
    params: &PolicyParams,
    prompt: &[Token],
    semantic: &[Token],
    scene: &[Token],
) -> Result<Vec<f64>, CoreError> {
    validate_sequence(&params.vocab, semantic, scene)?;
    let mut out = Vec::with_capacity(semantic.len() + scene.len());
    let mut walker = Walker::new(params, prompt);
    for (tokens, phase) in [(semantic, Phase::Semantic), (scene, Phase::Scene)] {
        for &t in tokens {
            let state = walker.state(phase);
            let hidden = hidden_from_state(params, &state);
            let (base, logp) = range_log_softmax(params, &hidden, phase);
            out.push(logp[t as usize - base]);
            walker.advance(t);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reverse-mode gradients
// ---------------------------------------------------------------------------

/// Accumulates parameter gradients across positions of one sequence.
///
/// The output/hidden-layer contributions are applied immediately per
/// position; embedding contributions flow through the prompt-mean and
/// decayed-prefix chains and are resolved in [`GradAccum::finish`].
pub(crate) struct GradAccum {
    c_prompt: [f64; EMBED_DIM],
    c_decay: Vec<f64>,
}

impl GradAccum {
    pub(crate) fn new() -> Self {
        GradAccum {
            c_prompt: [0.0; EMBED_DIM],
            c_decay: Vec::new(),
        }
    }

    /// Backpropagates one position's logit gradient `dz` (over the phase
    /// range starting at `base`) into `grad`.
    pub(crate) fn position(
        &mut self,
        params: &PolicyParams,
        state: &[f64; STATE_DIM],
        hidden: &[f64; HIDDEN_DIM],
        base: usize,
        dz: &[f64],
        grad: &mut [f64],
    ) {
        if dz.iter().all(|&x| x == 0.0) {
            self.c_decay.extend_from_slice(&[0.0; EMBED_DIM]);
            return;
        }
        let total = params.vocab.total();
        let wo_off = params.wo_offset();
        let bo_off = params.bo_offset();

        // Output layer: db_o, dW_o, and dh in one sweep.
        let mut dh = [0.0; HIDDEN_DIM];
        for (k, &d) in dz.iter().enumerate() {
            grad[bo_off + base + k] += d;
        }
        for (q, &hq) in hidden.iter().enumerate() {
            let row_off = wo_off + q * total + base;
            let wo_row = &params.values[row_off..row_off + dz.len()];
            let g_row = &mut grad[row_off..row_off + dz.len()];
            let mut acc = 0.0;
            for ((g, &w), &d) in g_row.iter_mut().zip(wo_row).zip(dz) {
                *g += hq * d;
                acc += w * d;
            }
            dh[q] = acc;
        }

        // Tanh backward, hidden layer, and the state gradient.
        let mut dpre = [0.0; HIDDEN_DIM];
        for ((dp, &h), &g) in dpre.iter_mut().zip(hidden.iter()).zip(dh.iter()) {
            *dp = g * (1.0 - h * h);
        }
        let wh_off = params.wh_offset();
        let bh_off = params.bh_offset();
        for (j, &dp) in dpre.iter().enumerate() {
            grad[bh_off + j] += dp;
        }
        let mut dstate = [0.0; STATE_DIM];
        for (i, &s) in state.iter().enumerate() {
            let row_off = wh_off + i * HIDDEN_DIM;
            let wh_row = &params.values[row_off..row_off + HIDDEN_DIM];
            let g_row = &mut grad[row_off..row_off + HIDDEN_DIM];
            let mut acc = 0.0;
            for ((g, &w), &dp) in g_row.iter_mut().zip(wh_row).zip(dpre.iter()) {
                *g += s * dp;
                acc += w * dp;
            }
            dstate[i] = acc;
        }

        for (c, &d) in self.c_prompt.iter_mut().zip(&dstate[..EMBED_DIM]) {
            *c += d;
        }
        self.c_decay
            .extend_from_slice(&dstate[EMBED_DIM..2 * EMBED_DIM]);
    }

    /// Resolves the embedding chains: the prompt-mean share for every
    /// prompt-token occurrence, and the reverse decayed-sum recurrence
    /// for the generated tokens.
    pub(crate) fn finish(self, prompt: &[Token], generated: &[Token], grad: &mut [f64]) {
        let n = generated.len();
        debug_assert_eq!(self.c_decay.len(), n * EMBED_DIM);
        if !prompt.is_empty() {
            let inv = 1.0 / prompt.len() as f64;
            for &t in prompt {
                let row = &mut grad[t as usize * EMBED_DIM..(t as usize + 1) * EMBED_DIM];
                for (g, c) in row.iter_mut().zip(self.c_prompt.iter()) {
                    *g += c * inv;
                }
            }
        }
        // acc holds sum_{j>k} decay^{j-1-k} c_decay[j] while k descends.
        let mut acc = [0.0; EMBED_DIM];
        for k in (0..n).rev() {
            if k + 1 < n {
                let c_next = &self.c_decay[(k + 1) * EMBED_DIM..(k + 2) * EMBED_DIM];
                for (a, &c) in acc.iter_mut().zip(c_next) {
                    *a = PREFIX_DECAY * *a + c;
                }
            } else {
                acc = [0.0; EMBED_DIM];
            }
            let t = generated[k] as usize;
            let row = &mut grad[t * EMBED_DIM..(t + 1) * EMBED_DIM];
            for (g, &a) in row.iter_mut().zip(acc.iter()) {
                *g += a;
            }
        }
    }
}

/// Gradient of `sum_j weights[j] * log pi(token_j | prefix_j)` with the
/// flat parameter layout. Also returns the per-position log-probs.
pub fn grad_logprob_sum(
    params: &PolicyParams,
    prompt: &[Token],
    semantic: &[Token],
    scene: &[Token],
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), CoreError> {
    validate_sequence(&params.vocab, semantic, scene)?;
    let n = semantic.len() + scene.len();
    if weights.len() != n {
        return Err(CoreError::LengthMismatch {
            what: "per-position weights",
            expected: n,
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "per-position weights",
        });
    }

    let mut grad = vec![0.0; params.values.len()];
    let mut logps = Vec::with_capacity(n);
    let mut accum = GradAccum::new();
    let mut walker = Walker::new(params, prompt);
    let mut pos = 0usize;
    for (tokens, phase) in [(semantic, Phase::Semantic), (scene, Phase::Scene)] {
        for &t in tokens {
            let state = walker.state(phase);
            let hidden = hidden_from_state(params, &state);
            let (base, logp) = range_log_softmax(params, &hidden, phase);
            let taken = t as usize - base;
            logps.push(logp[taken]);
            let w = weights[pos];
            let mut dz: Vec<f64> = logp.iter().map(|&lp| -w * exp(lp)).collect();
            dz[taken] += w;
            accum.position(params, &state, &hidden, base, &dz, &mut grad);
            walker.advance(t);
            pos += 1;
        }
    }
    let generated: Vec<Token> = semantic.iter().chain(scene.iter()).copied().collect();
    accum.finish(prompt, &generated, &mut grad);
    Ok((grad, logps))
}

/// Exact per-position `KL(pi_a(.|prefix) || pi_b(.|prefix))` over the
/// phase-masked vocabulary, teacher-forced along `(semantic, scene)`.
pub fn kl_exact(
    params_a: &PolicyParams,
    params_b: &PolicyParams,
    prompt: &[Token],
    semantic: &[Token],
    scene: &[Token],
) -> Result<Vec<f64>, CoreError> {
    let (kl, _) = kl_pass(params_a, params_b, prompt, semantic, scene, None)?;
    Ok(kl)
}

/// [`kl_exact`] plus the gradient of the position-summed KL with respect
/// to `params_a`, and the log-prob of each taken token under `params_b`.
pub fn kl_exact_with_grad(
    params_a: &PolicyParams,
    params_b: &PolicyParams,
    prompt: &[Token],
    semantic: &[Token],
    scene: &[Token],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), CoreError> {
    let mut grad = vec![0.0; params_a.values.len()];
    let (kl, taken_b) = kl_pass(params_a, params_b, prompt, semantic, scene, Some(&mut grad))?;
    Ok((kl, grad, taken_b))
}

fn kl_pass(
    params_a: &PolicyParams,
    params_b: &PolicyParams,
    prompt: &[Token],
    semantic: &[Token],
    scene: &[Token],
    mut grad: Option<&mut [f64]>,
) -> Result<(Vec<f64>, Vec<f64>), CoreError> {
    if params_a.vocab != params_b.vocab {
        return Err(CoreError::DimensionMismatch {
            what: "KL operands use different vocabularies",
        });
    }
    validate_sequence(&params_a.vocab, semantic, scene)?;
    let mut kls = Vec::with_capacity(semantic.len() + scene.len());
    let mut taken_b = Vec::with_capacity(kls.capacity());
    let mut accum = GradAccum::new();
    let mut walker_a = Walker::new(params_a, prompt);
    let mut walker_b = Walker::new(params_b, prompt);
    for (tokens, phase) in [(semantic, Phase::Semantic), (scene, Phase::Scene)] {
        for &t in tokens {
            let state_a = walker_a.state(phase);
            let hidden_a = hidden_from_state(params_a, &state_a);
            let (base, logp_a) = range_log_softmax(params_a, &hidden_a, phase);
            let state_b = walker_b.state(phase);
            let hidden_b = hidden_from_state(params_b, &state_b);
            let (_, logp_b) = range_log_softmax(params_b, &hidden_b, phase);

            let mut kl = 0.0;
            for (&la, &lb) in logp_a.iter().zip(&logp_b) {
                kl += exp(la) * (la - lb);
            }
            kls.push(kl);
            taken_b.push(logp_b[t as usize - base]);

            if let Some(g) = grad.as_deref_mut() {
                let dz: Vec<f64> = logp_a
                    .iter()
                    .zip(&logp_b)
                    .map(|(&la, &lb)| exp(la) * ((la - lb) - kl))
                    .collect();
                accum.position(params_a, &state_a, &hidden_a, base, &dz, g);
            }
            walker_a.advance(t);
            walker_b.advance(t);
        }
    }
    if let Some(g) = grad {
        let generated: Vec<Token> = semantic.iter().chain(scene.iter()).copied().collect();
        accum.finish(prompt, &generated, g);
    }
    Ok((kls, taken_b))
}
