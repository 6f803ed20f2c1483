//! Synthetic images and question families.
//!
//! Every image has a scene, and one object with a colour and a material.
//! Each image yields two families: global questions about the scene and
//! attribute questions about the object. Gold answers are consistent by
//! construction and `entailed` links follow the entailment edges between the
//! tasks present in the family.
//!
//! Features concatenate a noisy encoding of the image (shared by every
//! question about it) with an encoding of the question: its template and the
//! attribute values it mentions, and an interaction block: the mentioned
//! values masked onto the noisy image encoding, a crude stand-in for
//! attention. True and false variants of a verify question share a template
//! and differ only in how the question lines up with the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::batcher::QuestionRecord;

pub const SCENES: [&str; 10] = [
    "beach", "farm", "zoo", "kitchen", "street", "forest", "office", "park", "harbor", "desert",
];
pub const COLORS: [&str; 10] = [
    "red", "green", "blue", "yellow", "white", "black", "brown", "gray", "orange", "purple",
];
pub const MATERIALS: [&str; 4] = ["wood", "metal", "plastic", "glass"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Template {
    VerifyGlobal,
    QueryGlobal,
    ChooseGlobal,
    VerifyAttr,
    QueryAttr,
    ChooseAttr,
    VerifyAttrAnd,
}

const TEMPLATES: usize = 7;
const IMAGE_DIM: usize = SCENES.len() + COLORS.len() + MATERIALS.len();
pub const FEATURE_DIM: usize = IMAGE_DIM + TEMPLATES + 2 * IMAGE_DIM;

/// `yes`, `no`, the scenes and the colours.
pub fn answer_vocabulary() -> Vec<String> {
    ["yes", "no"]
        .iter()
        .chain(SCENES.iter())
        .chain(COLORS.iter())
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticConfig {
    /// Standard deviation of the per-image feature noise.
    pub image_noise: f64,
    /// Standard deviation of the per-question feature noise.
    pub question_noise: f64,
    /// Probability that a question is left out of its family.
    pub drop_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            image_noise: 0.25,
            question_noise: 0.1,
            drop_rate: 0.15,
        }
    }
}

/// One synthetic image.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub image_id: String,
    pub scene: usize,
    pub color: usize,
    pub material: usize,
}

struct Question {
    task: &'static str,
    template: Template,
    answer: String,
    scenes: Vec<usize>,
    colors: Vec<usize>,
    materials: Vec<usize>,
}

fn other(rng: &mut ChaCha8Rng, n: usize, not: usize) -> usize {
    let k = rng.random_range(0..n - 1);
    if k >= not {
        k + 1
    } else {
        k
    }
}

fn q(task: &'static str, template: Template, answer: &str) -> Question {
    Question {
        task,
        template,
        answer: answer.to_string(),
        scenes: vec![],
        colors: vec![],
        materials: vec![],
    }
}

// (source task, entailed task) edges within one family
const GLOBAL_EDGES: [(&str, &str); 4] = [
    ("verifyGlobalTrue", "verifyGlobalFalse"),
    ("verifyGlobalTrue", "queryGlobal"),
    ("queryGlobal", "verifyGlobalTrue"),
    ("verifyGlobalFalse", "chooseGlobal"),
];
const ATTR_EDGES: [(&str, &str); 6] = [
    ("verifyAttrAndTrue", "verifyAttrTrue"),
    ("verifyAttrTrue", "queryAttr"),
    ("queryAttr", "verifyAttrFalse"),
    ("queryAttr", "chooseAttr"),
    ("verifyAttrFalse", "verifyAttrAndFalse"),
    ("verifyAttrAndFalse", "chooseAttr"),
];

fn global_family(rng: &mut ChaCha8Rng, w: &SyntheticWorld) -> Vec<Question> {
    let s = w.scene;
    let wrong = other(rng, SCENES.len(), s);
    let alt = other(rng, SCENES.len(), s);
    let mut vt = q("verifyGlobalTrue", Template::VerifyGlobal, "yes");
    vt.scenes = vec![s];
    let mut vf = q("verifyGlobalFalse", Template::VerifyGlobal, "no");
    vf.scenes = vec![wrong];
    let qg = q("queryGlobal", Template::QueryGlobal, SCENES[s]);
    let mut cg = q("chooseGlobal", Template::ChooseGlobal, SCENES[s]);
    cg.scenes = vec![s, alt];
    vec![vt, vf, qg, cg]
}

fn attr_family(rng: &mut ChaCha8Rng, w: &SyntheticWorld) -> Vec<Question> {
    let (c, m) = (w.color, w.material);
    let wrong = other(rng, COLORS.len(), c);
    let alt = other(rng, COLORS.len(), c);
    let mut vt = q("verifyAttrTrue", Template::VerifyAttr, "yes");
    vt.colors = vec![c];
    let qa = q("queryAttr", Template::QueryAttr, COLORS[c]);
    let mut vf = q("verifyAttrFalse", Template::VerifyAttr, "no");
    vf.colors = vec![wrong];
    let mut ca = q("chooseAttr", Template::ChooseAttr, COLORS[c]);
    ca.colors = vec![c, alt];
    let mut at = q("verifyAttrAndTrue", Template::VerifyAttrAnd, "yes");
    at.colors = vec![c];
    at.materials = vec![m];
    let mut af = q("verifyAttrAndFalse", Template::VerifyAttrAnd, "no");
    if rng.random_bool(0.5) {
        af.colors = vec![c];
        af.materials = vec![other(rng, MATERIALS.len(), m)];
    } else {
        af.colors = vec![other(rng, COLORS.len(), c)];
        af.materials = vec![m];
    }
    vec![at, vt, qa, vf, af, ca]
}

fn one_hot_into(out: &mut [f64], idx: &[usize]) {
    for &i in idx {
        out[i] = 1.0;
    }
}

fn image_features(w: &SyntheticWorld) -> Vec<f64> {
    let mut v = vec![0.0; IMAGE_DIM];
    v[w.scene] = 1.0;
    v[SCENES.len() + w.color] = 1.0;
    v[SCENES.len() + COLORS.len() + w.material] = 1.0;
    v
}

// template one-hot, mentioned values, mentioned values ⊙ image
fn question_features(qn: &Question, image: &[f64]) -> Vec<f64> {
    let mut mentioned = vec![0.0; IMAGE_DIM];
    let (c0, m0) = (SCENES.len(), SCENES.len() + COLORS.len());
    one_hot_into(&mut mentioned[..c0], &qn.scenes);
    one_hot_into(&mut mentioned[c0..m0], &qn.colors);
    one_hot_into(&mut mentioned[m0..], &qn.materials);
    let mut v = vec![0.0; TEMPLATES];
    v[qn.template as usize] = 1.0;
    v.extend(&mentioned);
    v.extend(mentioned.iter().zip(image).map(|(m, x)| m * x));
    v
}

pub fn generate_synthetic(n_images: usize, seed: u64) -> Vec<QuestionRecord> {
    generate_synthetic_with(n_images, seed, &SyntheticConfig::default())
}

/// Records for `n_images` images. Ids are `<seed>-<image>-<k>` so datasets
/// generated with different seeds never collide.
pub fn generate_synthetic_with(n_images: usize, seed: u64, cfg: &SyntheticConfig) -> Vec<QuestionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img_noise = Normal::new(0.0, cfg.image_noise).expect("finite noise level");
    let q_noise = Normal::new(0.0, cfg.question_noise).expect("finite noise level");
    let mut out = Vec::with_capacity(n_images * 10);
    for img in 0..n_images {
        let world = SyntheticWorld {
            image_id: format!("{seed}-{img}"),
            scene: rng.random_range(0..SCENES.len()),
            color: rng.random_range(0..COLORS.len()),
            material: rng.random_range(0..MATERIALS.len()),
        };
        let mut image = image_features(&world);
        for v in &mut image {
            *v += img_noise.sample(&mut rng);
        }
        let families = [
            ("scene", global_family(&mut rng, &world), &GLOBAL_EDGES[..]),
            ("obj0", attr_family(&mut rng, &world), &ATTR_EDGES[..]),
        ];
        let mut k = 0;
        for (argument, questions, edges) in families {
            let mut keep: Vec<bool> = questions.iter().map(|_| !rng.random_bool(cfg.drop_rate)).collect();
            if !keep.iter().any(|&b| b) {
                let i = rng.random_range(0..keep.len());
                keep[i] = true;
            }
            let kept: Vec<(&Question, String)> = questions
                .iter()
                .zip(&keep)
                .filter(|(_, &b)| b)
                .map(|(qn, _)| {
                    let id = format!("{}-{k}", world.image_id);
                    k += 1;
                    (qn, id)
                })
                .collect();
            for (qn, id) in &kept {
                let entailed_ids = kept
                    .iter()
                    .filter(|(other, _)| edges.contains(&(qn.task, other.task)))
                    .map(|(_, oid)| oid.clone())
                    .collect();
                let mut features = image.clone();
                features.extend(question_features(qn, &image).into_iter().map(|v| v + q_noise.sample(&mut rng)));
                out.push(QuestionRecord {
                    id: id.clone(),
                    image_id: world.image_id.clone(),
                    argument: argument.to_string(),
                    task: qn.task.to_string(),
                    answer: qn.answer.clone(),
                    entailed_ids,
                    features: Some(features),
                });
            }
        }
    }
    out
}
