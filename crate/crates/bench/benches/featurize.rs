use criterion::{criterion_group, criterion_main, Criterion};
use viprof_core::synth::{generate_synthetic, SynthSpec};
use viprof_core::text::{build_vocabulary, profile_tokens, vectorize};
use viprof_core::visual::{build_prototype, SourceFilter};

fn featurize(c: &mut Criterion) {
    let spec = SynthSpec {
        profiles: 100,
        images_per_profile: 20,
        text_signal: 0.1,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec, 5).unwrap();
    let corpus = &data.corpus;
    let store = &data.embeddings;

    c.bench_function("profile_tokens/100 profiles", |b| {
        b.iter(|| corpus.profiles().iter().map(profile_tokens).map(|t| t.len()).sum::<usize>())
    });

    let tokens: Vec<Vec<String>> = corpus.profiles().iter().map(profile_tokens).collect();
    c.bench_function("build_vocabulary/10k", |b| b.iter(|| build_vocabulary(&tokens, 10_000).unwrap()));

    let vocab = build_vocabulary(&tokens, 10_000).unwrap();
    c.bench_function("vectorize/100 profiles", |b| {
        b.iter(|| tokens.iter().map(|t| vectorize(t, &vocab).nnz()).sum::<usize>())
    });

    c.bench_function("build_prototype/100 profiles x 20 images", |b| {
        b.iter(|| {
            corpus
                .profiles()
                .iter()
                .map(|p| build_prototype(corpus, p, store, SourceFilter::All).values.len())
                .sum::<usize>()
        })
    });
}

criterion_group!(benches, featurize);
criterion_main!(benches);
