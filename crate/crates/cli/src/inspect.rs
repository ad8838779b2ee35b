use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use gve_core::knowgraph::{AdjacencyTensor, GraphDocument, ObjectVocabulary};
use gve_core::{Error, Result};

use crate::run::GRAPH_FILE;

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Graph JSON document.
    #[arg(long, conflicts_with = "run", required_unless_present = "run")]
    graph: Option<PathBuf>,
    /// Run directory; reads its graph.json.
    #[arg(long, value_name = "DIR")]
    run: Option<PathBuf>,
    /// Neighbours listed per object.
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Restrict the per-object listing to these object names.
    #[arg(long = "object", value_name = "NAME")]
    objects: Vec<String>,
}

pub fn run(args: InspectArgs) -> Result<()> {
    let path = match (&args.graph, &args.run) {
        (Some(g), _) => g.clone(),
        (None, Some(r)) => r.join(GRAPH_FILE),
        (None, None) => return Err(Error::Config("pass --graph or --run".into())),
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let doc: GraphDocument = serde_json::from_str(&text)?;
    let adj = AdjacencyTensor::from_document(&doc)?;
    let ids = if args.objects.is_empty() {
        doc.vocabulary.ids().collect()
    } else {
        args.objects
            .iter()
            .map(|n| doc.vocabulary.id(n))
            .collect::<Result<Vec<_>>>()?
    };
    print!("{}", report(&adj, &doc.vocabulary, &ids, args.top));
    Ok(())
}

fn report(adj: &AdjacencyTensor, vocab: &ObjectVocabulary, ids: &[gve_core::knowgraph::ObjectId], top: usize) -> String {
    let n = adj.nodes();
    let mut s = String::new();
    let _ = writeln!(s, "{n} objects, {} channels, density {:.3}", adj.num_channels(), adj.density(vocab));
    for (c, label) in adj.labels().iter().enumerate() {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| adj.get(i, j, c) > 0.0)
            .count();
        let _ = writeln!(s, "  channel {c} {label:<12} {edges} edges");
    }
    for &id in ids {
        let neighbours = adj.top_neighbors(id, top);
        let list: Vec<String> = neighbours
            .iter()
            .map(|(j, room, w)| format!("{} ({}, {w:.2})", vocab.name(*j), room.label()))
            .collect();
        let _ = writeln!(
            s,
            "{:<16} {}",
            vocab.name(id),
            if list.is_empty() { "-".to_string() } else { list.join(", ") }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use gve_core::knowgraph::{build_from_cooccurrence, RoomType, View};

    use super::*;

    #[test]
    fn report_counts_edges_per_channel() {
        let vocab = ObjectVocabulary::standard();
        let kitchen = vocab.room_objects(RoomType::Kitchen);
        let (a, b) = (vocab.name(kitchen[0]), vocab.name(kitchen[1]));
        let view = View::from_names(RoomType::Kitchen, &[a, b], &vocab).unwrap();
        let adj = build_from_cooccurrence(vec![view; 3], &vocab, 3);
        let text = report(&adj, &vocab, &[kitchen[0]], 5);
        assert!(text.contains("kitchen      1 edges"), "{text}");
        assert!(text.contains("bedroom      0 edges"), "{text}");
        assert!(text.contains(&format!("{b} (kitchen, 1.00)")), "{text}");
    }
}
