//! Seeded synthetic corpora with known structure, used by tests, demos and
//! smoke runs. Token families are disjoint between the two narratives of a
//! mixture, with an adjustable fraction of tokens drawn from a shared pool
//! to raise topic similarity. Marked mixtures additionally give the first
//! narrative a mixture-local anchor token, repeated in each of its
//! sentences, while second-narrative sentences carry unique decoy markers;
//! pairwise marker overlap then identifies the first narrative but says
//! nothing about the second, so attributing decoy sentences requires the
//! mixture context.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::embedding::EmbeddingTable;
use crate::events::{EventItem, EventSalad, EventTuple};
use crate::saladgen::{Label, Salad, SaladItem};

fn family(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

/// Shape of a synthetic sentence-mixture corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub salads: usize,
    pub sentences_per_side: usize,
    pub sentence_len: usize,
    pub family_size: usize,
    pub shared_size: usize,
    /// Markers available for anchors and decoys; mixtures carry markers only
    /// when the pool exceeds `sentences_per_side`.
    pub marker_pool: usize,
    /// Shared-pool fraction of the easiest mixture.
    pub min_shared_fraction: f64,
    /// Shared-pool fraction of the hardest mixture; mixtures are graded
    /// linearly between the two bounds.
    pub max_shared_fraction: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        MixtureSpec {
            salads: 12,
            sentences_per_side: 5,
            sentence_len: 8,
            family_size: 24,
            shared_size: 24,
            marker_pool: 12,
            min_shared_fraction: 0.0,
            max_shared_fraction: 0.9,
        }
    }
}

impl MixtureSpec {
    pub fn family_a(&self) -> Vec<String> {
        family("alpha", self.family_size)
    }

    pub fn family_b(&self) -> Vec<String> {
        family("beta", self.family_size)
    }

    pub fn shared_pool(&self) -> Vec<String> {
        family("comm", self.shared_size)
    }

    pub fn markers(&self) -> Vec<String> {
        family("mark", self.marker_pool)
    }

    /// Every token any generated mixture can contain.
    pub fn all_tokens(&self) -> Vec<String> {
        let mut out = self.family_a();
        out.extend(self.family_b());
        out.extend(self.shared_pool());
        out.extend(self.markers());
        out
    }
}

fn pick<'a>(pool: &'a [String], rng: &mut ChaCha8Rng) -> &'a str {
    &pool[rng.gen_range(0..pool.len())]
}

fn build_salad(
    spec: &MixtureSpec,
    index: usize,
    lambda: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Salad {
    let fam_a = spec.family_a();
    let fam_b = spec.family_b();
    let shared = spec.shared_pool();
    let markers = spec.markers();
    // One anchor for every first-narrative sentence, then one distinct decoy
    // per second-narrative sentence. Marker overlap separates first-narrative
    // pairs, while decoy pairs and cross pairs share nothing; only the
    // mixture population reveals which marker is the anchor.
    let mut marks: Vec<Option<String>> = if markers.len() > spec.sentences_per_side {
        rand::seq::index::sample(rng, markers.len(), spec.sentences_per_side + 1)
            .iter()
            .map(|m| Some(markers[m].clone()))
            .collect()
    } else {
        vec![None; spec.sentences_per_side + 1]
    };
    let decoys = marks.split_off(1);
    let anchor = marks.pop().expect("anchor slot");
    let sides = [(Label::A, &fam_a), (Label::B, &fam_b)];

    let mut items = Vec::with_capacity(2 * spec.sentences_per_side);
    for (gold, fam) in sides {
        for k in 0..spec.sentences_per_side {
            let marker = match gold {
                Label::A => anchor.clone(),
                Label::B => decoys[k].clone(),
            };
            let mut tokens = Vec::with_capacity(spec.sentence_len);
            let body = spec.sentence_len - usize::from(marker.is_some());
            for _ in 0..body {
                let pool: &[String] = if lambda > 0.0 && rng.gen::<f64>() < lambda {
                    &shared
                } else {
                    fam
                };
                tokens.push(pick(pool, rng).to_string());
            }
            if let Some(marker) = &marker {
                let at = rng.gen_range(0..=tokens.len());
                tokens.insert(at, marker.clone());
            }
            items.push(SaladItem {
                tokens,
                gold,
                source_id: match gold {
                    Label::A => format!("syn-a-{index:04}"),
                    Label::B => format!("syn-b-{index:04}"),
                },
            });
        }
    }
    items.shuffle(rng);
    Salad {
        id: format!("syn-{index:04}"),
        source_a: format!("syn-a-{index:04}"),
        source_b: format!("syn-b-{index:04}"),
        seed,
        items,
    }
}

/// Mixtures whose two narratives draw from disjoint token families, with no
/// shared tokens and no markers. Any sane distance separates them.
pub fn separable_salads(spec: &MixtureSpec, seed: u64) -> Vec<Salad> {
    let clean = MixtureSpec {
        marker_pool: 0,
        min_shared_fraction: 0.0,
        max_shared_fraction: 0.0,
        ..spec.clone()
    };
    (0..spec.salads)
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            build_salad(&clean, i, 0.0, s, &mut rng)
        })
        .collect()
}

/// Mixtures graded from easy to hard: mixture `i` draws a fraction of its
/// non-marker tokens from the shared pool, interpolated linearly from
/// `min_shared_fraction` to `max_shared_fraction`, which raises the topic
/// similarity of its two sides. Returns each mixture with its shared
/// fraction.
pub fn graded_salads(spec: &MixtureSpec, seed: u64) -> Vec<(Salad, f64)> {
    let (lo, hi) = (spec.min_shared_fraction, spec.max_shared_fraction);
    (0..spec.salads)
        .map(|i| {
            let lambda = if spec.salads > 1 {
                lo + (hi - lo) * i as f64 / (spec.salads - 1) as f64
            } else {
                lo
            };
            let s = derive_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (build_salad(spec, i, lambda, s, &mut rng), lambda)
        })
        .collect()
}

/// Embeddings matching the generated token groups: each group sits on its
/// own axis, each token at its group pole plus uniform noise.
pub fn mixture_table(spec: &MixtureSpec, dim: usize, noise: f64, seed: u64) -> EmbeddingTable {
    assert!(dim >= 4, "need one axis per token group");
    let mut table = EmbeddingTable::new(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = [
        (spec.family_a(), 0),
        (spec.family_b(), 1),
        (spec.shared_pool(), 2),
        (spec.markers(), 3),
    ];
    for (tokens, axis) in groups {
        for token in tokens {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-noise..=noise)).collect();
            v[axis] += 1.0;
            table.insert(token, v);
        }
    }
    table
}

/// Shape of a synthetic event-mixture corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub salads: usize,
    pub items_per_side: usize,
    pub verbs_per_family: usize,
    pub nouns_per_family: usize,
    /// Probability that an argument slot draws from a pool common to both
    /// narratives instead of the side's own family.
    pub shared_fraction: f64,
}

impl Default for EventSpec {
    fn default() -> Self {
        EventSpec {
            salads: 6,
            items_per_side: 4,
            verbs_per_family: 6,
            nouns_per_family: 6,
            shared_fraction: 0.0,
        }
    }
}

/// Event mixtures whose two narratives use disjoint verb and noun families,
/// except for slots diverted to a shared pool by `shared_fraction`. Each item
/// holds one event; arguments are sometimes absent and a preposition phrase
/// is sometimes attached.
pub fn event_salads(spec: &EventSpec, seed: u64) -> Vec<EventSalad> {
    let verbs = [family("va", spec.verbs_per_family), family("vb", spec.verbs_per_family)];
    let nouns = [family("na", spec.nouns_per_family), family("nb", spec.nouns_per_family)];
    let places = [family("pa", spec.nouns_per_family), family("pb", spec.nouns_per_family)];
    let shared_verbs = family("vs", spec.verbs_per_family);
    let shared_nouns = family("ns", spec.nouns_per_family);
    let shared_places = family("ps", spec.nouns_per_family);
    let preps = ["in", "with", "at"];
    let shared = |rng: &mut ChaCha8Rng| {
        spec.shared_fraction > 0.0 && rng.gen::<f64>() < spec.shared_fraction
    };

    (0..spec.salads)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let mut items = Vec::with_capacity(2 * spec.items_per_side);
            for side in 0..2 {
                let gold = if side == 0 { Label::A } else { Label::B };
                for _ in 0..spec.items_per_side {
                    let verb_pool = if shared(&mut rng) { &shared_verbs } else { &verbs[side] };
                    let verb = pick(verb_pool, &mut rng).to_string();
                    let subj = rng.gen_bool(0.75).then(|| {
                        let pool = if shared(&mut rng) { &shared_nouns } else { &nouns[side] };
                        pick(pool, &mut rng).to_string()
                    });
                    let dobj = rng.gen_bool(0.75).then(|| {
                        let pool = if shared(&mut rng) { &shared_nouns } else { &nouns[side] };
                        pick(pool, &mut rng).to_string()
                    });
                    let pps = if rng.gen_bool(0.4) {
                        let pool = if shared(&mut rng) { &shared_places } else { &places[side] };
                        vec![(
                            preps[rng.gen_range(0..preps.len())].to_string(),
                            pick(pool, &mut rng).to_string(),
                        )]
                    } else {
                        Vec::new()
                    };
                    items.push(EventItem {
                        events: vec![EventTuple {
                            verb,
                            subj,
                            dobj,
                            pps,
                        }],
                        gold,
                    });
                }
            }
            items.shuffle(&mut rng);
            EventSalad {
                id: format!("synev-{i:04}"),
                items,
            }
        })
        .collect()
}
