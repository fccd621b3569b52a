"""
Setup and installation script for the COCOA toolkit
"""

import subprocess
import sys
from pathlib import Path


def check_python_version():
    """Check if Python version is compatible"""
    if sys.version_info < (3, 8):
        print("❌ Python 3.8 or higher is required")
        print(f"Current version: {sys.version}")
        return False

    print(f"✅ Python version: {sys.version}")
    return True


def install_requirements():
    """Install required packages"""
    print("📦 Installing required packages...")

    try:
        requirements_file = Path(__file__).parent / "requirements.txt"

        if not requirements_file.exists():
            print("❌ requirements.txt not found")
            return False

        result = subprocess.run([
            sys.executable, "-m", "pip", "install", "-r", str(requirements_file)
        ], capture_output=True, text=True)

        if result.returncode == 0:
            print("✅ Requirements installed successfully")
            return True
        else:
            print(f"❌ Failed to install requirements: {result.stderr}")
            return False

    except Exception as e:
        print(f"❌ Error installing requirements: {e}")
        return False


def create_directories():
    """Create the default data, checkpoint and metrics directories"""
    print("📁 Creating directories...")

    for dir_name in ["data", "checkpoints", "runs"]:
        Path(dir_name).mkdir(exist_ok=True)
        print(f"✅ Created directory: {dir_name}")


def test_installation():
    """Generate a tiny dataset and run one loss evaluation"""
    print("🧪 Testing installation...")

    try:
        import colorama  # noqa: F401
        import sklearn  # noqa: F401
        from cocoa import SynthConfig, generate, init_params, encode, EncoderConfig
        from cocoa.losses import OpCounter, cocoa_loss, CocoaHyper

        dataset = generate(SynthConfig(num_classes=3, num_modalities=2, window=16, windows_per_class=4))
        config = EncoderConfig.for_dataset(dataset, kernel_sizes=(3, 3, 2), filter_counts=(4, 4, 4))
        counter = OpCounter()
        cocoa_loss(encode(init_params(config), dataset.full_batch()), CocoaHyper(), counter)

        print(f"✅ Installation test passed ({counter.similarity_evaluations} similarity evaluations)")
        return True

    except ImportError as e:
        print(f"❌ Import error: {e}")
        return False
    except Exception as e:
        print(f"❌ Test failed: {e}")
        return False


def show_usage_info():
    """Show usage information"""
    print("\n" + "=" * 60)
    print("🧠 COCOA Toolkit - Installation Complete!")
    print("=" * 60)
    print()
    print("Usage options:")
    print()
    print("1. Command Line Interface:")
    print("   python cocoa_cli.py --help")
    print()
    print("2. Walkthroughs:")
    print("   python examples.py")
    print()
    print("Examples:")
    print("   # Generate the default synthetic dataset")
    print("   python cocoa_cli.py synth --out data/ --seed 7")
    print()
    print("   # Pretrain with COCOA and probe the frozen encoders")
    print("   python cocoa_cli.py pretrain --method cocoa --data data/ --out checkpoints/cocoa")
    print("   python cocoa_cli.py probe --checkpoint checkpoints/cocoa --data data/")
    print()
    print("   # Count similarity evaluations, COCOA against CMC")
    print("   python cocoa_cli.py bench --V 2,3,4 --N 8,64,256")
    print()
    print("Tests:")
    print("   python -m unittest discover -p 'test_*.py'")
    print("=" * 60)


def main():
    """Main setup function"""
    print("🚀 COCOA Toolkit Setup")
    print("=" * 40)

    if not check_python_version():
        return False

    if not install_requirements():
        print("\n❌ Setup failed: Could not install requirements")
        print("Try running manually: pip install -r requirements.txt")
        return False

    create_directories()

    if not test_installation():
        print("\n❌ Setup failed: Installation test failed")
        return False

    show_usage_info()

    print("\n✅ Setup completed successfully!")
    return True


if __name__ == "__main__" and len(sys.argv) > 1:
    # Invoked by a build frontend (pip/setuptools): metadata lives in pyproject.toml
    from setuptools import setup
    setup()
elif __name__ == "__main__":
    try:
        success = main()
        if not success:
            sys.exit(1)
    except KeyboardInterrupt:
        print("\n❌ Setup interrupted by user")
        sys.exit(1)
    except Exception as e:
        print(f"\n❌ Setup failed with error: {e}")
        sys.exit(1)
