#!/usr/bin/env python3
"""
Environment Setup Script

Copies env.example to .env, creates the log and output directories named in
it and checks that the shipped scenario configs are in place.
"""

import os
import shutil
import sys

from dotenv import dotenv_values


def copy_env_example():
    """Copy env.example to .env if .env doesn't exist."""
    if os.path.exists('.env'):
        print("⚠️  .env file already exists!")
        response = input("Do you want to overwrite it? (y/N): ")
        if response.lower() != 'y':
            print("❌ Setup cancelled.")
            return False

    try:
        shutil.copy('env.example', '.env')
        print("✅ Created .env file from env.example")
        return True
    except FileNotFoundError:
        print("❌ env.example file not found!")
        return False
    except Exception as e:
        print(f"❌ Error copying file: {e}")
        return False


def create_directories():
    """Create LOG_DIR and OUTPUT_ROOT as configured in .env."""
    values = dotenv_values('.env')
    for key, default in (('LOG_DIR', 'logs'), ('OUTPUT_ROOT', 'runs')):
        directory = values.get(key) or default
        os.makedirs(directory, exist_ok=True)
        print(f"✅ {key}: {directory}/")


def check_required_files():
    """Check if required files exist."""
    required_files = [
        'env.example',
        'config/logging.yaml',
        'config/default.yaml',
        'config/forced.yaml',
        'src/settings.py'
    ]

    missing_files = [file for file in required_files if not os.path.exists(file)]
    if missing_files:
        print("❌ Missing required files:")
        for file in missing_files:
            print(f"   - {file}")
        return False

    print("✅ All required files found")
    return True


def show_next_steps():
    print("\n" + "="*60)
    print("📋 Next Steps:")
    print("1. Validate a scenario:   python -m src.main validate config/default.yaml")
    print("2. Run it:                python -m src.main run config/default.yaml")
    print("3. Optional: set SENTRY_DSN and a Celery broker in .env")


def main():
    """Main setup function."""
    print("🔧 capflux Environment Setup")
    print("="*50)

    if not check_required_files():
        print("❌ Setup failed: Missing required files")
        sys.exit(1)

    if not copy_env_example():
        print("❌ Setup failed: Could not create .env file")
        sys.exit(1)

    create_directories()
    show_next_steps()
    print("\n🎉 Environment setup completed!")


if __name__ == '__main__':
    main()
