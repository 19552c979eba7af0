use clap::Args;
use koopgait::io::{write_sequence, Manifest, ManifestEntry, Role, SequenceRecord};
use koopgait::synth::generate_population;

use super::Context;
use crate::dataset::MANIFEST_FILE;
use crate::failure::Failure;
use crate::runlog::RunLog;

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of identities.
    #[arg(long, default_value_t = 20)]
    pub subjects: usize,
    /// Sequences per identity.
    #[arg(long, default_value_t = 6)]
    pub seqs_per: usize,
    /// Frames per sequence.
    #[arg(long, default_value_t = 150)]
    pub frames: usize,
    /// Standard deviation of the angle noise (radians).
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub noise: f64,
    /// Leading takes of every identity that form the gallery; the rest are probes.
    #[arg(long, default_value_t = 4)]
    pub gallery_per: usize,
}

pub fn run(ctx: &Context, args: &GenArgs, log: &mut RunLog) -> Result<(), Failure> {
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(Failure::usage(format!("--noise must be a non-negative number, got {}", args.noise)));
    }
    if args.gallery_per == 0 || args.gallery_per >= args.seqs_per {
        return Err(Failure::usage(format!(
            "--gallery-per must leave at least one gallery and one probe take, got {} of {}",
            args.gallery_per, args.seqs_per
        )));
    }
    let seed = ctx.config.seed;
    let population = generate_population(args.subjects, args.seqs_per, args.frames, args.noise, seed)?;
    let mut entries = Vec::with_capacity(population.sequences.len());
    for s in &population.sequences {
        let file = format!("{}_take{}.seq", s.label, s.take);
        let record = SequenceRecord { label: s.label.clone(), shape: s.shape.clone(), sequence: s.sequence.clone() };
        write_sequence(&ctx.path(&file), &record).map_err(|e| Failure::runtime(e.to_string()))?;
        let role = if s.take < args.gallery_per { Role::Gallery } else { Role::Probe };
        entries.push(ManifestEntry { file, label: s.label.clone(), take: s.take, role });
    }
    let params = vec![
        ("subjects".to_string(), args.subjects.to_string()),
        ("seqs_per".to_string(), args.seqs_per.to_string()),
        ("frames".to_string(), args.frames.to_string()),
        ("noise".to_string(), args.noise.to_string()),
        ("gallery_per".to_string(), args.gallery_per.to_string()),
        ("seed".to_string(), seed.to_string()),
    ];
    for (k, v) in params.iter().filter(|(k, _)| k != "seed") {
        log.note(k, v);
    }
    let manifest = Manifest { params, entries };
    ctx.write(MANIFEST_FILE, manifest.format()?.as_bytes())?;
    println!("wrote {} sequences and {MANIFEST_FILE} to {}", manifest.entries.len(), ctx.out_dir.display());
    Ok(())
}
