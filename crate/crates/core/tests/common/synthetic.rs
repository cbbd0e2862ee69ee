//! A synthetic corpus wired to oracle translators, for whole-engine runs.

use std::sync::Arc;

use roundtrip_core::backends::{
    generate_synthetic_corpus, plan_faults, SyntheticBackend, SyntheticCorpus, TemplateSet,
};
use roundtrip_core::corpus::CorpusRecord;
use roundtrip_core::equivalence::EquivalenceChecker;
use roundtrip_core::experiment::Experiment;
use roundtrip_core::pipeline::{FixedClock, Pipeline, RoleBackends, WellformednessPolicy};
use roundtrip_core::repair::{RepairCondition, RepairConfig};
use roundtrip_core::smt::Schema;

pub const TRAFFIC_SCHEMA: &str = include_str!("../../../../data/schema/traffic_sample.smt2");

pub struct Setup {
    pub schema: Schema,
    pub templates: TemplateSet,
    pub clock: FixedClock,
    pub corpus: SyntheticCorpus,
    pub records: Vec<CorpusRecord>,
}

impl Setup {
    /// `n` rules from `seed`, each with one stubborn fault at a drawn stage.
    pub fn stubborn(seed: u64, n: usize) -> Setup {
        let schema = Schema::load(TRAFFIC_SCHEMA).unwrap();
        let plain = generate_synthetic_corpus(seed, n, &schema, &[]).unwrap();
        let ids: Vec<String> = plain.rules.iter().map(|r| r.id.clone()).collect();
        let faults = plan_faults(seed, &ids, 100, None, true);
        assert_eq!(faults.len(), n);
        let corpus = generate_synthetic_corpus(seed, n, &schema, &faults).unwrap();
        let records = corpus.records();
        Setup {
            schema,
            templates: TemplateSet::builtin(),
            clock: FixedClock(0),
            corpus,
            records,
        }
    }

    pub fn experiment(&self, condition: RepairCondition, checker: EquivalenceChecker) -> Experiment<'_> {
        Experiment {
            pipeline: Pipeline {
                schema: &self.schema,
                templates: &self.templates,
                policy: WellformednessPolicy::default(),
                clock: &self.clock,
            },
            backends: RoleBackends::uniform(Arc::new(SyntheticBackend::with_faults(self.corpus.world.clone()))),
            checker,
            repair: RepairConfig::new(condition),
        }
    }
}
