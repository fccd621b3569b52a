"""
Command line launcher for the COCOA toolkit

Subcommands (see ``python cocoa_cli.py --help``):
- synth: generate a synthetic multimodal dataset
- pretrain / probe / finetune: the single-run training stages
- label-curve / batch-sweep / modality-pairs / tau-sweep: multi-seed sweeps
- bench: similarity-count benchmark of COCOA against CMC
- export-embeddings: raw or encoded features with labels, for plotting
"""

from cocoa.cli import dispatch, main

__all__ = ['dispatch', 'main']

if __name__ == "__main__":
    main()
