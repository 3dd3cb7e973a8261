use pdna_core::align::levenshtein;
use pdna_core::pool::{
    design_references, read_pool, write_pool, BuiltPool, DesignConfig, Pool, PoolConfig,
    ReferenceDictionary, MIN_MOLECULE_NT,
};
use pdna_core::retrieval::{build_pool, encode_image};
use pdna_core::synthetic::scene;

fn two_images() -> (BuiltPool, BuiltPool) {
    let one = |id: &str, seed| {
        let layers = encode_image(id, &scene(48, 48, seed), 3).unwrap();
        build_pool(
            &[(id.to_string(), layers)],
            PoolConfig {
                seed,
                ..PoolConfig::default()
            },
        )
        .unwrap()
    };
    (one("left", 1), one("right", 2))
}

#[test]
fn dictionary_of_fifteen_entries_survives_a_file() {
    let refs =
        design_references(15, &ReferenceDictionary::new(), 3, &DesignConfig::default()).unwrap();
    let mut dict = ReferenceDictionary::new();
    for (i, r) in refs.iter().enumerate() {
        dict.register(&format!("kodim{:02}", i / 3 + 1), i % 3, r.clone())
            .unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dict.json");
    dict.save(&path).unwrap();
    let back = ReferenceDictionary::load(&path).unwrap();
    assert_eq!(back, dict);
    for (i, r) in refs.iter().enumerate() {
        assert_eq!(
            back.lookup(&format!("kodim{:02}", i / 3 + 1), i % 3)
                .unwrap(),
            &r[..]
        );
    }
    assert_eq!(
        back.images().values().copied().collect::<Vec<_>>(),
        vec![3; 5]
    );
}

#[test]
fn references_keep_their_distance() {
    let refs =
        design_references(20, &ReferenceDictionary::new(), 9, &DesignConfig::default()).unwrap();
    for i in 0..refs.len() {
        for j in i + 1..refs.len() {
            assert!(levenshtein(&refs[i], &refs[j]) >= 15, "{i} vs {j}");
        }
    }
}

#[test]
fn merged_pools_count_both_images() {
    let (a, b) = two_images();
    let mut ab = a.pool.clone();
    ab.merge(&b.pool).unwrap();
    assert_eq!(ab.len(), a.pool.len() + b.pool.len());
    assert_eq!(
        ab.total_abundance(),
        a.pool.total_abundance() + b.pool.total_abundance()
    );
    let mut ba = b.pool.clone();
    ba.merge(&a.pool).unwrap();
    assert_eq!(ab, ba);

    // associativity, with overlap so abundances actually sum
    let mut left = a.pool.clone();
    left.merge(&b.pool).unwrap();
    left.merge(&a.pool).unwrap();
    let mut bb = b.pool.clone();
    bb.merge(&a.pool).unwrap();
    let mut right = a.pool.clone();
    right.merge(&bb).unwrap();
    assert_eq!(left, right);
    assert_eq!(
        left.total_abundance(),
        2 * a.pool.total_abundance() + b.pool.total_abundance()
    );
}

#[test]
fn written_molecules_are_long_and_addressed() {
    let (a, _) = two_images();
    let mut buf = Vec::new();
    write_pool(&a.pool, &mut buf).unwrap();
    let back: Pool = read_pool(&buf[..]).unwrap();
    assert_eq!(back, a.pool);
    for e in back.iter() {
        assert!(e.sequence.len() >= MIN_MOLECULE_NT);
        let reference = a.dictionary.lookup(&e.image_id, e.layer).unwrap();
        assert!(e.sequence.starts_with(reference));
    }
    // every layer of the image is present and registered exactly once
    let catalog = back.catalog();
    assert_eq!(catalog.len(), 3);
    assert_eq!(a.dictionary.len(), 3);
}

#[test]
fn equimolar_abundance_balances_references() {
    let (a, _) = two_images();
    let mut per_layer = [0u64; 3];
    for e in a.pool.iter() {
        per_layer[e.layer] += e.abundance;
    }
    let max = *per_layer.iter().max().unwrap() as f64;
    let min = *per_layer.iter().min().unwrap() as f64;
    assert!(min / max > 0.8, "{per_layer:?}");
}
