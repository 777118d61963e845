//! Property tests for genome strings and genetic operators.

use proptest::prelude::*;
use swapnas::netgraph::{
    crossover, decode, encode, mutate_connectivity, mutate_operation, random_genome, Genome, GenomeError, SpaceId,
};

fn space() -> impl Strategy<Value = SpaceId> {
    prop::sample::select(SpaceId::ALL.to_vec())
}

/// Number of positions at which two genomes of the same space differ.
fn differing_positions(a: &Genome, b: &Genome) -> usize {
    match (a, b) {
        (Genome::Cell(a), Genome::Cell(b)) => a.edges.iter().zip(&b.edges).filter(|(x, y)| x != y).count(),
        (Genome::Transformer(a), Genome::Transformer(b)) => {
            a.fields().iter().zip(b.fields().iter()).filter(|(x, y)| x != y).count()
        }
        _ => panic!("space mismatch"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn codec_round_trips(space in space(), seed in any::<u64>()) {
        let g = random_genome(space, seed);
        let s = encode(&g);
        let back = decode(&s).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(encode(&back), s);
    }

    #[test]
    fn corrupted_strings_never_panic(space in space(), seed in any::<u64>(), cut in 0usize..200, junk in "[a-z=;|~+,0-9]{0,4}") {
        let s = encode(&random_genome(space, seed));
        let cut = cut.min(s.len());
        let mangled = format!("{}{}", &s[..cut], junk);
        if let Ok(g) = decode(&mangled) {
            prop_assert_eq!(encode(&g), mangled);
        }
    }

    #[test]
    fn operation_mutation_changes_exactly_one_position(space in space(), seed in any::<u64>(), mseed in any::<u64>()) {
        let g = random_genome(space, seed);
        match mutate_operation(&g, mseed) {
            Ok(child) => {
                child.validate().unwrap();
                prop_assert_eq!(differing_positions(&g, &child), 1);
                if let (Genome::Cell(a), Genome::Cell(b)) = (&g, &child) {
                    for (x, y) in a.edges.iter().zip(&b.edges) {
                        prop_assert_eq!((x.src, x.dst), (y.src, y.dst));
                    }
                }
            }
            Err(e) => prop_assert!(matches!(e, GenomeError::NoOperationFreedom)),
        }
    }

    #[test]
    fn connectivity_mutation_rewires_one_edge(seed in any::<u64>(), mseed in any::<u64>()) {
        let Genome::Cell(g) = random_genome(SpaceId::DartsLite, seed) else { unreachable!() };
        let child = mutate_connectivity(&g, mseed).unwrap();
        child.validate().unwrap();
        let changed: Vec<_> = g.edges.iter().zip(&child.edges).filter(|(x, y)| x != y).collect();
        prop_assert_eq!(changed.len(), 1);
        let (before, after) = changed[0];
        prop_assert_eq!(before.op, after.op);
        prop_assert_eq!(before.dst, after.dst);
        prop_assert!(after.src < after.dst);
        prop_assert_ne!(before.src, after.src);
    }

    #[test]
    fn crossover_takes_every_position_from_a_parent(space in space(), sa in any::<u64>(), sb in any::<u64>(), cs in any::<u64>()) {
        let (a, b) = (random_genome(space, sa), random_genome(space, sb));
        let child = match crossover(&a, &b, cs) {
            Ok(c) => c,
            // Transformer children can pair a head count with a width it does not divide.
            Err(GenomeError::Invalid(_)) if space == SpaceId::Transformer => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        child.validate().unwrap();
        match (&a, &b, &child) {
            (Genome::Cell(a), Genome::Cell(b), Genome::Cell(c)) => {
                for i in 0..c.edges.len() {
                    prop_assert!(c.edges[i] == a.edges[i] || c.edges[i] == b.edges[i]);
                }
            }
            (Genome::Transformer(a), Genome::Transformer(b), Genome::Transformer(c)) => {
                let (fa, fb, fc) = (a.fields(), b.fields(), c.fields());
                for i in 0..fc.len() {
                    prop_assert!(fc[i] == fa[i] || fc[i] == fb[i]);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn operators_are_deterministic_in_their_seed(space in space(), seed in any::<u64>(), s2 in any::<u64>()) {
        let a = random_genome(space, seed);
        prop_assert_eq!(&a, &random_genome(space, seed));
        let b = random_genome(space, s2);
        prop_assert_eq!(crossover(&a, &b, 9).ok(), crossover(&a, &b, 9).ok());
        prop_assert_eq!(mutate_operation(&a, s2).ok(), mutate_operation(&a, s2).ok());
    }
}

#[test]
fn crossover_across_spaces_is_rejected() {
    let a = random_genome(SpaceId::Nb201, 1);
    let b = random_genome(SpaceId::DartsLite, 1);
    assert!(matches!(crossover(&a, &b, 0), Err(GenomeError::SpaceMismatch(..))));
}
