"""
Example usage of the COCOA toolkit
"""

import logging

from colorama import Fore, init

from cocoa import (
    LossHyper, OpCounter, SynthConfig, TrainConfig, encode, generate, init_params, linear_probe,
    pretrain, run_bench,
)
from cocoa.batching import sample_batch
from cocoa.bench import ratio_is_monotone
from cocoa.constants import SSL_METHODS
from cocoa.encoder import EmbeddingSet, EncoderConfig
from cocoa.log_utils import setup_logging
from cocoa.losses import ssl_loss
from cocoa.pipeline import DataSplits, random_encoders
from cocoa.synthgen import separability_report

init(autoreset=True)

SMALL_ENCODER = {"kernel_sizes": [5, 4, 3], "filter_counts": [8, 16, 8], "projection_dim": 16, "fusion_dim": 16}


def small_dataset():
    return generate(SynthConfig(num_classes=4, num_modalities=3, window=32, windows_per_class=60, seed=7))


def example_synthetic_data():
    """Example: Generate a dataset and check that only the fused view separates every class"""
    print(f"{Fore.CYAN}Example 1: Synthetic Multimodal Data")
    print("-" * 40)

    dataset = small_dataset()
    print(f"Generated {dataset.num_windows} windows over modalities {dataset.modality_names}")
    print(f"Class histogram: {dataset.class_histogram().tolist()}")

    singles, fused = separability_report(dataset)
    for name, accuracy in zip(dataset.modality_names, singles):
        print(f"  {name}: 1-NN accuracy {accuracy:.3f}")
    print(f"{Fore.GREEN}  fused: 1-NN accuracy {fused:.3f}")


def example_loss_comparison():
    """Example: Evaluate every self-supervised loss on the same batch"""
    print(f"\n{Fore.CYAN}Example 2: Loss Comparison on One Batch")
    print("-" * 40)

    dataset = small_dataset()
    batch = sample_batch(dataset, 16, rng_seed=0)
    params = init_params(EncoderConfig.for_dataset(dataset, **SMALL_ENCODER), seed=0)
    z = encode(params.freeze(), batch)
    pair = EmbeddingSet(z.modality_names[:2], z.embeddings[:2])

    for method in SSL_METHODS:
        counter = OpCounter()
        # pairwise objectives contrast the first two modalities only
        views = z if method in ("cocoa", "cmc") else pair
        loss = ssl_loss(method, views, LossHyper(), counter)
        print(f"  {method:<9} loss {loss.item():10.4f}  similarity evaluations {counter.similarity_evaluations}")


def example_pretrain_and_probe():
    """Example: Short COCOA pretraining against a random-encoder probe"""
    print(f"\n{Fore.CYAN}Example 3: Pretrain and Probe")
    print("-" * 40)

    dataset = small_dataset()
    config = TrainConfig(method="cocoa", batch_size=16, max_epochs=5, encoder=SMALL_ENCODER)
    splits = DataSplits.from_dataset(dataset, seed=config.seed)

    print("Pretraining COCOA for up to 5 epochs...")
    result = pretrain(splits, config)
    print(f"Best epoch {result.best_epoch}, validation loss {result.best_val_loss:.4f}")

    trained = linear_probe(result.params, splits, config)
    baseline = linear_probe(random_encoders(splits.train, config), splits, config)
    print(f"{Fore.GREEN}COCOA probe test macro-F1:  {trained.test_f1:.4f}")
    print(f"{Fore.YELLOW}Random probe test macro-F1: {baseline.test_f1:.4f}")


def example_complexity():
    """Example: Similarity evaluations of COCOA and CMC as V and N grow"""
    print(f"\n{Fore.CYAN}Example 4: Similarity Counts")
    print("-" * 40)

    report = run_bench([2, 3, 4], [8, 64], dim=16, repeats=1)
    vs, ns = report.grid
    for v in vs:
        for n in ns:
            print(f"  V={v} N={n:<3}  cocoa {report.count('cocoa', v, n):>6}  "
                  f"cmc {report.count('cmc', v, n):>6}  ratio {report.ratio(v, n):.2f}")
    if ratio_is_monotone(report):
        print(f"{Fore.GREEN}The cmc/cocoa ratio grows with V and N")


if __name__ == "__main__":
    print(f"{Fore.MAGENTA}🧠 COCOA Toolkit - Examples")
    print("=" * 50)
    setup_logging(logging.WARNING)

    try:
        example_synthetic_data()
        example_loss_comparison()
        example_complexity()
        example_pretrain_and_probe()

    except KeyboardInterrupt:
        print(f"\n{Fore.YELLOW}Examples interrupted by user")
    except Exception as e:
        print(f"{Fore.RED}Error in examples: {e}")
        print(f"{Fore.YELLOW}Make sure to install dependencies: pip install -r requirements.txt")
