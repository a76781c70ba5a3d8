//! Synthetic survey corpus with a controlled regex-classifiable fraction.
//!
//! Every topic has trigger sentences that fire its own rule and no other,
//! plus paraphrases that reuse the topic's vocabulary but fire no rule.
//! Paraphrase documents are built entirely from paraphrases, so they tag as
//! the no-topic sentinel while still carrying gold labels. Trigger documents
//! may render secondary labels as paraphrases (missed by the rules) and may
//! carry a decoy sentence that fires an unlabelled topic's rule.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rulebook::{TopicRuleSet, TOPIC_COUNT};
use crate::training::LabeledSample;

pub struct TopicTemplates {
    pub triggers: &'static [&'static str],
    pub paraphrases: &'static [&'static str],
}

/// Relative topic frequencies used when sampling labels.
pub const TOPIC_WEIGHTS: [u32; TOPIC_COUNT] = [
    28, 47, 7, 65, 53, 25, 17, 27, 26, 31, 10, 24, 22, 29, 22, 29, 34, 27, 27, 20, 47, 2, 41, 27,
    38, 39, 29,
];

pub const TEMPLATES: [TopicTemplates; TOPIC_COUNT] = [
    TopicTemplates {
        triggers: &[
            "I could not understand the agent at all",
            "the rep was hard to understand",
            "it was difficult to understand what the representative meant",
            "the representative was impossible to understand",
            "honestly I can't understand my agent",
            "the agent is not fluent",
            "I was unable to understand the rep when she explained the steps",
        ],
        paraphrases: &[
            "the agent mumbled and I understood very little",
            "I struggled to understand anything the rep said",
            "what the representative said was hard to follow",
            "the agent spoke too fast to understand",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the agent was very knowledgeable",
            "the rep knew exactly what to do",
            "they gave me wrong information about my account",
            "I got incorrect answers twice",
            "thanks for the quick response",
            "she answered all my questions",
            "the staff showed a lack of knowledge",
        ],
        paraphrases: &[
            "the agent had no knowledge of my benefits",
            "the information she gave me was wrong",
            "my questions were answered quickly",
            "he gave a quick and helpful answer",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the call was handled offshore",
            "I was routed to an overseas call centre",
            "your support is clearly outsourced",
            "the agents in india could not help",
            "I spoke to a call center in the philippines",
            "the agent from another country read from a script",
        ],
        paraphrases: &[
            "the call centre is clearly in another country",
            "the agents were based in india",
            "support was moved out of the country",
            "I was connected to a call centre abroad",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the agent was rude",
            "the representative was so impolite",
            "a very condescending tone from the staff",
            "the rep was very friendly",
            "a patient representative walked me through it",
            "what a terrible attitude",
            "the staff were disrespectful to me",
        ],
        paraphrases: &[
            "the agent was nasty to me",
            "the staff were so friendly",
            "the representative was really kind",
            "the rep treated me politely",
        ],
    },
    TopicTemplates {
        triggers: &[
            "excellent customer service",
            "the service was terrible",
            "really poor service overall",
            "great service from start to finish",
            "I am unhappy with the quality of service",
            "outstanding service as always",
            "bad service today",
        ],
        paraphrases: &[
            "the service I received was excellent",
            "service has been poor lately",
            "customer service here is really great",
            "very happy with the service",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I cannot log in to the app",
            "the app won't let me sign in",
            "face id stopped working",
            "the fingerprint check fails every time",
            "my app passcode is never accepted",
            "sign in to your mobile app is impossible",
        ],
        paraphrases: &[
            "the app keeps rejecting my login",
            "I can never get into the app",
            "the app asks for my pin and then locks me out",
            "the app refuses my face every morning",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the app is so confusing",
            "the application was really clunky",
            "navigating the app is painful",
            "the app layout is a mess",
            "I like that the app is very intuitive",
            "the app design could be better",
        ],
        paraphrases: &[
            "the menus in the app make no sense",
            "the app screens are confusing",
            "the layout of the app is a mess",
            "the app feels clunky to use",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the line was terrible with a bad connection",
            "the call got dropped twice",
            "I could not hear the agent",
            "choppy audio the whole time",
            "there was an echo on the line",
            "a static line made it hard to talk",
        ],
        paraphrases: &[
            "the connection kept cutting out",
            "the line was full of noise",
            "the audio was choppy",
            "the phone line went dead halfway through",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I was transferred to three departments",
            "they kept transferring me",
            "I got put through to another team",
            "I was passed around for an hour",
            "my call was bounced between departments",
        ],
        paraphrases: &[
            "three transfers later I gave up",
            "I was passed to another department",
            "I was sent to yet another team",
            "they handed me off to another department",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I called three times about this",
            "I have called several times already",
            "I had to call again the next day",
            "I kept calling with no luck",
            "I called 5 times this week",
            "calling repeatedly is exhausting",
            "I called you many times",
        ],
        paraphrases: &[
            "this is the third time I have called",
            "I called again and again",
            "I have made many calls about this",
            "so many calls and still nothing",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the ivr is useless",
            "the automated system hung up on me",
            "too many prompts before a human",
            "press one then press two then nothing",
            "the phone menu goes in circles",
            "I was talking to a robot",
        ],
        paraphrases: &[
            "the automated message kept repeating",
            "the menu options go on forever",
            "I kept pressing buttons and got nowhere",
            "the voice menu sent me in circles",
        ],
    },
    TopicTemplates {
        triggers: &[
            "nobody called me back",
            "there was no follow up at all",
            "I never heard back from anyone",
            "no one returned my call",
            "they promised a follow-up that never came",
            "still waiting for someone to call me back",
        ],
        paraphrases: &[
            "nobody ever got back to me",
            "I am still waiting for a call",
            "they promised to follow through and never did",
            "my messages were never returned",
        ],
    },
    TopicTemplates {
        triggers: &[
            "there was a real language barrier",
            "the agent spoke broken english",
            "he did not speak english well",
            "a very thick accent made it hard",
            "she had a strong accent",
            "poor english on the other end",
        ],
        paraphrases: &[
            "her english was very limited",
            "his accent was so heavy I gave up",
            "the language was a real problem",
            "he barely spoke any english",
        ],
    },
    TopicTemplates {
        triggers: &[
            "my issue was not resolved",
            "they could not fix the problem",
            "the problem persists after two calls",
            "still unresolved after weeks",
            "they failed to solve anything",
            "the issue is still not fixed",
        ],
        paraphrases: &[
            "the problem is still there",
            "nobody resolved my issue",
            "my issue remains open after weeks",
            "nothing was fixed",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I tried to submit my claim online",
            "I filed a claim online and it vanished",
            "the online claim form crashed",
            "uploading the receipts failed",
            "online claims submission is broken",
            "I could not upload my documents",
        ],
        paraphrases: &[
            "submitting my claim through the website failed",
            "the online form would not take my receipts",
            "I could not send my receipts online",
            "uploads of my claim documents never finish",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the claim process is slow",
            "claims processing takes ages",
            "it took so long to process",
            "the processing time was awful",
            "it takes months to process anything",
        ],
        paraphrases: &[
            "processing my claim took forever",
            "the process is far too slow",
            "my claim has been processing for months",
            "it is a slow process every time",
        ],
    },
    TopicTemplates {
        triggers: &[
            "my claim was denied",
            "they rejected my claim",
            "the claim got declined without reason",
            "claims refused for no reason",
            "a wrong decision on my file",
        ],
        paraphrases: &[
            "my claim has been denied",
            "they denied it without explanation",
            "the decision on my claim was unfair",
            "the claim result was not what I expected",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I want an update on my claim",
            "the claim status never changes",
            "checking on my claim is impossible",
            "still waiting for a claim decision",
            "what is the status of the claim",
        ],
        paraphrases: &[
            "I never get an update about my claim",
            "no one can tell me the status",
            "I have no idea where my claim stands",
            "I keep checking for news on the claim",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I am still waiting for my reimbursement",
            "the claim payment was late",
            "I have not been paid yet",
            "where is my refund",
            "the payment deposit went to the wrong account",
            "they never paid me",
        ],
        paraphrases: &[
            "the payment never arrived",
            "my money has still not come through",
            "I am still owed payment for my visit",
            "the cheque for my claim never came",
        ],
    },
    TopicTemplates {
        triggers: &[
            "my glasses were not covered",
            "the coverage limit is too low",
            "my policy doesn't cover physio",
            "the deductible is too high",
            "my premium went up again",
            "I asked what my plan covers",
        ],
        paraphrases: &[
            "my policy excluded my medication",
            "the coverage on my plan is too small",
            "physio is no longer covered",
            "my plan barely covers anything",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I cannot log in to the website",
            "the portal won't let me sign in",
            "I got locked out of my online account",
            "two factor codes never arrive",
            "the verification code expired",
            "login to the portal fails",
        ],
        paraphrases: &[
            "the website rejects my login every time",
            "I cannot get into the portal",
            "my online account keeps locking me out",
            "the portal keeps refusing my login",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I am not very tech savvy",
            "I am not good with computers",
            "I don't know how to use a computer",
            "my mother is computer illiterate",
            "I am not computer literate",
        ],
        paraphrases: &[
            "computers are a mystery to me",
            "I am hopeless with computers",
            "technology is too hard for me at my age",
            "my son has to use the computer for me",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the website is easy",
            "the portal was very simple",
            "the site is straightforward",
            "the website was a breeze",
            "the portal is really difficult",
            "the site was complicated",
        ],
        paraphrases: &[
            "the website is super easy",
            "I found the portal easy to use",
            "using the site was quite simple",
            "the website was pretty difficult",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I could not find the information on the website",
            "the portal is missing information",
            "there is not enough information",
            "I was unable to find any details on your site",
            "the website has no claim details",
        ],
        paraphrases: &[
            "the information on the website is incomplete",
            "I looked for details on the portal and found nothing",
            "the site needs more information",
            "no information about claims on your site",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the website layout is awful",
            "navigating the portal is a pain",
            "it is not user friendly",
            "the site is cluttered",
            "the portal menu is hidden",
            "the website was outdated",
        ],
        paraphrases: &[
            "the menus on the website are confusing",
            "the layout of the portal is awful",
            "the site looks cluttered",
            "moving around the website is a pain",
        ],
    },
    TopicTemplates {
        triggers: &[
            "I had to reset my password",
            "I forgot my password again",
            "the password reset email never came",
            "my password expired",
            "I changed my password and it still fails",
            "my new password doesn't work",
        ],
        paraphrases: &[
            "my password keeps failing",
            "the password rules are impossible",
            "my password is never accepted",
            "I have to update my password every week",
        ],
    },
    TopicTemplates {
        triggers: &[
            "the website crashed twice",
            "the portal was down all weekend",
            "pages are loading slowly",
            "the site keeps freezing",
            "constant downtime",
            "a server error every time",
        ],
        paraphrases: &[
            "the website is very slow",
            "pages take ages to load",
            "the portal froze on me again",
            "the website kept crashing",
        ],
    },
];

/// Topic-neutral sentences mixed into every kind of document.
pub const FILLERS: &[&str] = &[
    "I have been a member for ten years",
    "this happened last tuesday",
    "I hope someone reads this",
    "thanks for asking for my opinion",
    "I am writing on behalf of my husband",
    "please pass this on",
    "my family has the same plan",
    "just wanted to share my experience",
    "that is all I have to say",
    "I spoke with someone this morning",
];

/// Incidental mentions: each fires the listed rule without being feedback
/// on that topic.
pub const DECOYS: &[(usize, &str)] = &[
    (
        0,
        "I could not understand the agent's question at first but we sorted that out",
    ),
    (1, "my pharmacist is very knowledgeable"),
    (2, "my son works overseas"),
    (3, "my teenager has an attitude these days"),
    (4, "my bank has excellent customer service"),
    (7, "I could not hear the television over the dog"),
    (8, "I transferred money to my son last week"),
    (9, "my doctor's office called two times to confirm"),
    (10, "my grandson built a robot for school"),
    (11, "I have a follow-up appointment with my dentist"),
    (12, "my neighbour has a strong accent"),
    (13, "the dentist could not fix my tooth in one visit"),
    (15, "I read about the claims process in the handbook"),
    (18, "my employer reimburses my gym membership"),
    (19, "my car insurance premium is cheap"),
    (26, "my home internet had some downtime last week"),
];

/// Sentences unrelated to any topic, for emerging-topic checks.
pub const OFF_TOPIC: &[&str] = &[
    "my tomatoes are finally ripening in the garden",
    "the football match went into extra time",
    "we baked a lemon cake for the party",
    "the weather at the beach was lovely",
    "our cat learned to open the kitchen door",
    "I am reading a novel about sailing",
    "the hiking trail was muddy after the rain",
    "my neighbour plays the violin at night",
    "the museum has a new dinosaur exhibit",
    "we planted roses along the fence",
    "the orchestra tuned up before the concert",
    "my nephew scored a goal on saturday",
    "the bakery on the corner sells fresh bread",
    "we watched the fireworks from the hill",
    "the river froze over in january",
    "my sister is learning to knit scarves",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub size: usize,
    /// Share of documents written only with paraphrases.
    pub paraphrase_fraction: f64,
    /// Relative weights of one, two and three labels per document.
    pub label_count_weights: [u32; 3],
    /// In rule-matching documents, chance that each label after the first
    /// is written as a paraphrase.
    pub mixed_fraction: f64,
    /// Chance that a rule-matching document also carries a decoy sentence.
    pub decoy_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            size: 400,
            paraphrase_fraction: 0.25,
            label_count_weights: LABEL_COUNT_WEIGHTS,
            mixed_fraction: 0.3,
            decoy_fraction: 0.3,
            seed: 7,
        }
    }
}

/// Probabilities of one, two or three labels per document.
const LABEL_COUNT_WEIGHTS: [u32; 3] = [45, 35, 20];

fn render(mut sentences: Vec<&str>) -> String {
    let mut out = String::new();
    for s in sentences.drain(..) {
        let mut chars = s.chars();
        if let Some(first) = chars.next() {
            out.extend(first.to_uppercase());
            out.push_str(chars.as_str());
            out.push_str(". ");
        }
    }
    out.trim_end().to_string()
}

fn add_fillers(rng: &mut ChaCha8Rng, sentences: &mut Vec<&str>) {
    for _ in 0..rng.random_range(0..=2) {
        sentences.push(FILLERS.choose(rng).expect("fillers"));
    }
    sentences.shuffle(rng);
}

/// Generates a labeled corpus. Ids are `syn-<seed>-<index>`.
pub fn generate_corpus(cfg: &CorpusConfig, rules: &TopicRuleSet) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topics = WeightedIndex::new(TOPIC_WEIGHTS).expect("positive weights");
    let counts = WeightedIndex::new(cfg.label_count_weights).expect("positive weights");
    (0..cfg.size)
        .map(|i| {
            let k = counts.sample(&mut rng) + 1;
            let mut ids: Vec<usize> = Vec::with_capacity(k);
            while ids.len() < k {
                let t = topics.sample(&mut rng);
                if !ids.contains(&t) {
                    ids.push(t);
                }
            }
            let paraphrase = rng.random_bool(cfg.paraphrase_fraction);
            let mut sentences: Vec<&str> = ids
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    let para = paraphrase || (j > 0 && rng.random_bool(cfg.mixed_fraction));
                    let pool = if para {
                        TEMPLATES[t].paraphrases
                    } else {
                        TEMPLATES[t].triggers
                    };
                    *pool.choose(&mut rng).expect("templates")
                })
                .collect();
            if !paraphrase && rng.random_bool(cfg.decoy_fraction) {
                let candidates: Vec<&str> = DECOYS
                    .iter()
                    .filter(|(t, _)| !ids.contains(t))
                    .map(|&(_, s)| s)
                    .collect();
                sentences.push(candidates.choose(&mut rng).expect("decoys"));
            }
            add_fillers(&mut rng, &mut sentences);
            LabeledSample::new(
                format!("syn-{}-{i}", cfg.seed),
                render(sentences),
                ids.iter()
                    .map(|&t| rules.name(t).expect("topic id").to_string()),
            )
        })
        .collect()
}

/// Documents drawn from none of the topic generators; labels are empty.
pub fn generate_off_topic(n: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = rng.random_range(1..=2);
            let mut sentences: Vec<&str> =
                OFF_TOPIC.choose_multiple(&mut rng, k).copied().collect();
            if rng.random_bool(0.3) {
                sentences.push(FILLERS.choose(&mut rng).expect("fillers"));
            }
            sentences.shuffle(&mut rng);
            LabeledSample::new(
                format!("off-{seed}-{i}"),
                render(sentences),
                Vec::<String>::new(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rulebook::NO_TOPIC_ID;

    #[test]
    fn triggers_fire_only_their_rule() {
        let rules = TopicRuleSet::reference();
        for (t, tpl) in TEMPLATES.iter().enumerate() {
            for s in tpl.triggers {
                assert_eq!(rules.matching_ids(s), vec![t], "trigger {s:?}");
            }
        }
    }

    #[test]
    fn decoys_fire_only_their_rule() {
        let rules = TopicRuleSet::reference();
        for &(t, s) in DECOYS {
            assert_eq!(rules.matching_ids(s), vec![t], "decoy {s:?}");
        }
    }

    #[test]
    fn paraphrases_fillers_and_off_topic_fire_nothing() {
        let rules = TopicRuleSet::reference();
        let all = TEMPLATES
            .iter()
            .flat_map(|t| t.paraphrases.iter())
            .chain(FILLERS)
            .chain(OFF_TOPIC);
        for s in all {
            assert!(
                rules.matching_ids(s).is_empty(),
                "{s:?} fired {:?}",
                rules.matching_ids(s)
            );
        }
    }

    #[test]
    fn documents_tag_as_designed() {
        let rules = TopicRuleSet::reference();
        let clean = CorpusConfig {
            size: 2000,
            mixed_fraction: 0.0,
            decoy_fraction: 0.0,
            ..Default::default()
        };
        let mut paraphrased = 0;
        for s in &generate_corpus(&clean, &rules) {
            let fv = rules.tag(&s.doc_id, &s.text, 7);
            let mut gold: Vec<usize> = s.labels.iter().map(|l| rules.id_of(l).unwrap()).collect();
            gold.sort();
            if fv.feature_ids == [NO_TOPIC_ID] {
                paraphrased += 1;
            } else {
                assert_eq!(fv.feature_ids, gold, "{}", s.text);
            }
            assert!((1..=3).contains(&s.labels.len()));
        }
        let frac = paraphrased as f64 / 2000.0;
        assert!((frac - 0.25).abs() < 0.03, "{frac}");
    }

    #[test]
    fn mixing_and_decoys_keep_the_sentinel_share() {
        let rules = TopicRuleSet::reference();
        let corpus = generate_corpus(
            &CorpusConfig {
                size: 2000,
                ..Default::default()
            },
            &rules,
        );
        let (mut sentinel, mut extra, mut missing) = (0, 0, 0);
        for s in &corpus {
            let fv = rules.tag(&s.doc_id, &s.text, 7);
            if fv.is_no_topic() {
                sentinel += 1;
                continue;
            }
            let gold: Vec<usize> = s.labels.iter().map(|l| rules.id_of(l).unwrap()).collect();
            let fired = fv.feature_ids.iter().filter(|t| !gold.contains(t)).count();
            assert!(fired <= 1, "{}", s.text);
            extra += fired;
            missing += gold.iter().filter(|t| !fv.feature_ids.contains(t)).count();
        }
        let frac = sentinel as f64 / 2000.0;
        assert!((frac - 0.25).abs() < 0.03, "{frac}");
        assert!(extra > 0 && missing > 0);
    }

    #[test]
    fn off_topic_tags_sentinel() {
        let rules = TopicRuleSet::reference();
        for s in generate_off_topic(200, 3) {
            assert_eq!(
                rules.tag(&s.doc_id, &s.text, 7).feature_ids,
                vec![NO_TOPIC_ID]
            );
            assert!(s.labels.is_empty());
        }
    }

    #[test]
    fn generation_is_seeded() {
        let rules = TopicRuleSet::reference();
        let cfg = CorpusConfig {
            size: 50,
            ..Default::default()
        };
        assert_eq!(generate_corpus(&cfg, &rules), generate_corpus(&cfg, &rules));
        let other = CorpusConfig { seed: 8, ..cfg };
        assert_ne!(
            generate_corpus(&cfg, &rules)[0].text,
            generate_corpus(&other, &rules)[0].text
        );
    }

    #[test]
    fn sentences_are_capitalised() {
        assert_eq!(
            render(vec!["the agent was rude", "please pass this on"]),
            "The agent was rude. Please pass this on."
        );
    }
}
