use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use stylesearch_core::bovw::{quantize, train_codebook, Codebook, DescriptorSet};
use stylesearch_core::corpus::{build_cooccurrence, load_corpus};
use stylesearch_core::detect::{filter_detections, format_detections, load_detections};
use stylesearch_core::experiment::{run_experiment, Artifacts};
use stylesearch_core::query_encoder::{train_encoder, WordVectors};
use stylesearch_core::style_embed::{cluster_quality, make_pairs, train_cbow, EmbeddingTable};
use stylesearch_core::synth::{load_labels, synth_bundle, write_bundle, SynthSpec};
use stylesearch_core::vector::VectorBlock;
use stylesearch_core::{Config, Corpus, ItemId, VectorIndex};

use crate::{BovwCommand, Command};

pub fn run(command: Command, config: Config) -> Result<()> {
    match command {
        Command::Ingest { corpus, check } => ingest(&corpus.corpus, check),
        Command::Synth { spec, out, two_clique } => {
            let spec = match spec {
                Some(p) => SynthSpec::load(&p)?,
                None if two_clique => SynthSpec::two_clique(),
                None => SynthSpec::default(),
            };
            let seed = config.seed.unwrap_or(0);
            let bundle = synth_bundle(&spec, seed)?;
            write_bundle(&bundle, &out)?;
            println!(
                "wrote {} items, {} rooms to {}",
                bundle.corpus.items.len(),
                bundle.corpus.rooms.len(),
                out.display()
            );
            Ok(())
        }
        Command::BuildIndex {
            corpus,
            out,
            per_class,
            no_per_class,
        } => {
            let root = &corpus.corpus;
            let c = load_corpus(root)?;
            let partitioned = if no_per_class {
                false
            } else {
                per_class || config.per_class_index()
            };
            let index = VectorIndex::from_visual_features(&c, partitioned)?;
            let out = out.unwrap_or_else(|| config.resolve(root, &config.paths.index));
            ensure_parent(&out)?;
            index.save(&out)?;
            println!("indexed {} items (dim {}) into {}", index.len(), index.dim(), out.display());
            Ok(())
        }
        Command::Bovw { command } => bovw(command, &config),
        Command::TrainEmbeddings {
            corpus,
            dim,
            epochs,
            out,
            report_clusters,
        } => {
            let root = &corpus.corpus;
            let c = load_corpus(root)?;
            let mut cfg = config.cbow;
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            let vocab: Vec<ItemId> = c.items.keys().cloned().collect();
            let (table, report) = train_cbow(&make_pairs(&c), &vocab, &cfg)?;
            let out = out.unwrap_or_else(|| config.resolve(root, &config.paths.embeddings));
            ensure_parent(&out)?;
            table.save(&out)?;
            println!(
                "trained {} embeddings (dim {}), final loss {:.6}, {} untrained",
                table.ids.len(),
                table.dim,
                report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                table.untrained.len()
            );
            if let Some(labels) = report_clusters {
                let (intra, inter) = cluster_quality(&table, &load_labels(&labels)?)?;
                println!("cluster cosine distance: intra {intra:.4}, inter {inter:.4}, gap {:.4}", inter - intra);
            }
            Ok(())
        }
        Command::TrainEncoder {
            corpus,
            variant,
            embeddings,
            words,
            epochs,
            out,
        } => {
            let root = &corpus.corpus;
            let c = load_corpus(root)?;
            let table = EmbeddingTable::load(&embeddings.unwrap_or_else(|| config.resolve(root, &config.paths.embeddings)))?;
            let words = WordVectors::load(&words.unwrap_or_else(|| config.resolve(root, &config.paths.words)))?;
            let mut cfg = config.encoder;
            if let Some(v) = variant {
                cfg.variant = v.into();
            }
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            let (model, report) = train_encoder(&c, &table, &words, &cfg)?;
            let out = out.unwrap_or_else(|| config.resolve(root, &config.paths.encoder));
            ensure_parent(&out)?;
            model.save(&out)?;
            println!(
                "trained {:?} encoder on {} items ({} skipped): mse {:.6} -> {:.6}",
                cfg.variant, report.samples, report.skipped, report.initial_mse, report.final_mse
            );
            Ok(())
        }
        Command::DetectFilter {
            input,
            threshold,
            iou,
            per_class_nms,
            out,
        } => {
            let mut cfg = config.detect;
            cfg.threshold = threshold.unwrap_or(cfg.threshold);
            cfg.iou_threshold = iou.unwrap_or(cfg.iou_threshold);
            cfg.per_class |= per_class_nms;
            if !(0.0..=1.0).contains(&cfg.threshold) || !(0.0..=1.0).contains(&cfg.iou_threshold) {
                anyhow::bail!("thresholds must lie in [0, 1]");
            }
            let dets = load_detections(&input)?;
            let kept: Vec<_> = filter_detections(&dets, &cfg).into_iter().map(|k| k.detection).collect();
            let text = format_detections(&kept);
            match out {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            log::info!("kept {} of {} detections", kept.len(), dets.len());
            Ok(())
        }
        Command::Evaluate {
            corpus,
            out,
            table,
            curves,
        } => {
            let root = &corpus.corpus;
            let c = load_corpus(root)?;
            let artifacts = Artifacts::load(root, &config)?;
            let mut exp = config.experiment.clone();
            exp.detect = config.detect;
            let report = run_experiment(&c, &artifacts, &exp)?;
            write(&out, &report.to_json()?)?;
            if let Some(p) = table {
                write(&p, &report.to_table())?;
            }
            if let Some(p) = curves {
                write(&p, &report.curves_csv())?;
            }
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Serve { corpus, addr } => {
            let addr = addr.unwrap_or_else(|| config.server.addr.clone());
            crate::server::serve(&corpus.corpus, config, &addr)
        }
    }
}

fn ingest(root: &Path, check: bool) -> Result<()> {
    let c = load_corpus(root).with_context(|| format!("loading corpus from {}", root.display()))?;
    if check {
        return Ok(());
    }
    summary(&c);
    Ok(())
}

fn summary(c: &Corpus) {
    let detections: usize = c.rooms.values().filter_map(|r| r.detections.as_ref()).map(Vec::len).sum();
    let m = build_cooccurrence(c);
    println!("items {}", c.items.len());
    println!("rooms {}", c.rooms.len());
    println!(
        "visual dim {}",
        c.visual_dim().map_or_else(|| "-".to_string(), |d| d.to_string())
    );
    println!("detections {detections}");
    println!("max pair co-occurrence {}", m.max_off_diagonal());
}

fn item_sets(c: &Corpus, root: &Path) -> Result<Vec<(ItemId, DescriptorSet)>> {
    c.items
        .values()
        .map(|i| {
            let img = i
                .image_ref
                .as_deref()
                .with_context(|| format!("item {} has no image reference", i.id))?;
            Ok((i.id.clone(), DescriptorSet::load(root, img)?))
        })
        .collect()
}

fn bovw(command: BovwCommand, config: &Config) -> Result<()> {
    match command {
        BovwCommand::Train { corpus, k, out } => {
            let root = &corpus.corpus;
            let c = load_corpus(root)?;
            let sets: Vec<DescriptorSet> = item_sets(&c, root)?.into_iter().map(|(_, s)| s).collect();
            let mut cfg = config.kmeans;
            cfg.k = k.unwrap_or(cfg.k);
            let (codebook, report) = train_codebook(&sets, &cfg)?;
            let out = out.unwrap_or_else(|| config.resolve(root, &config.paths.codebook));
            ensure_parent(&out)?;
            codebook.save(&out)?;
            println!(
                "codebook of {} words, final inertia {:.6}, converged {}, {} repaired clusters",
                codebook.k(),
                report.inertia.last().copied().unwrap_or(f64::NAN),
                report.converged,
                report.repaired_clusters
            );
            Ok(())
        }
        BovwCommand::Encode { corpus, codebook, out } => {
            let root = &corpus.corpus;
            let c = load_corpus(root)?;
            let cb = Codebook::load(&codebook.unwrap_or_else(|| config.resolve(root, &config.paths.codebook)))?;
            let mut rows = Vec::new();
            let mut ids = String::new();
            for (id, set) in item_sets(&c, root)? {
                rows.push(quantize(&set, &cb)?.counts);
                ids.push_str(id.as_str());
                ids.push('\n');
            }
            VectorBlock::new(cb.k(), rows)?.save(&out)?;
            let ids_path = PathBuf::from(format!("{}.ids", out.display()));
            write(&ids_path, &ids)?;
            println!("wrote {} histograms to {}", c.items.len(), out.display());
            Ok(())
        }
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write(p: &Path, text: &str) -> Result<()> {
    ensure_parent(p)?;
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}
