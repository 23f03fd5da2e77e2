import argparse
import json

from commands.base import Command, load_dataset
from config.settings import RunConfig
from services.graph_builder import build_graph, describe_graph
from storage import GraphStore, ReportWriter
from utils.helpers import format_details, format_table


class BuildGraphCommand(Command):
    """Build the cross-session item graph from the training sessions."""

    name = "build-graph"
    help = "Build the typed cross-session item graph"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--epsilon", type=int, default=None, help="Neighbor window")
        parser.add_argument("--top-n", dest="top_n", type=int, default=None,
                            help="Incoming edges kept per node and relation")
        parser.add_argument("--top-q", dest="top_q", type=int, default=None,
                            help="Named category-pair relations")
        parser.add_argument("--alpha", type=float, default=None, help="Frequency exponent")
        parser.add_argument("--no-side-info", dest="use_side_info", action="store_false",
                            default=None)

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        dataset = load_dataset(config)
        graph = build_graph(
            dataset.train_sequences(),
            dataset.vocab.category_array(),
            dataset.vocab.num_categories,
            config.graph,
        )
        path = args.out or config.paths.graph
        GraphStore(path).save(graph)
        report = ReportWriter(config.paths.reports_dir).write_relations(graph)
        self.logger.log_artifact(
            "graph", path, nodes=graph.num_nodes, edges=graph.num_edges,
            relations=graph.relations.num_relations,
        )
        self.logger.log_artifact("relation report", report)
        return 0


class InspectGraphCommand(Command):
    """Print a summary of a saved graph, optionally exporting it as JSON."""

    name = "inspect-graph"
    help = "Summarize a graph file"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--json", dest="as_json", action="store_true",
                            help="Print the summary as JSON")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        store = GraphStore(config.paths.graph)
        graph = store.load()
        summary = describe_graph(graph)

        if args.as_json:
            print(json.dumps(summary, indent=2))
        else:
            print(format_details({
                "nodes": summary["nodes"],
                "edges": summary["edges"],
                "relations": summary["relations"],
                "same edges": summary["fallback_edges"]["same"],
                "drift edges": summary["fallback_edges"]["drift"],
                "in-degree (min/mean/max)": "{min}/{mean:.2f}/{max}".format(**summary["in_degree"]),
            }))
            if summary["named_relations"]:
                rows = [
                    (r["relation"], f"{r['pair'][0]} -> {r['pair'][1]}", r["count"], r["edges"])
                    for r in summary["named_relations"]
                ]
                print(format_table(["relation", "categories", "count", "edges"], rows))

        if args.out:
            store.export_json(graph, args.out)
        return 0


def setup(cli):
    """Register the commands."""
    cli.add_command(BuildGraphCommand())
    cli.add_command(InspectGraphCommand())
