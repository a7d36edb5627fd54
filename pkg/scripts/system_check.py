#!/usr/bin/env python3
"""
bohmflux System Check
Validates the environment, configs and service modules before a long run
"""
import os
import sys

print("=" * 70)
print("BOHMFLUX SYSTEM CHECK")
print("=" * 70)
print()

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
sys.path.insert(0, ROOT)

from dotenv import load_dotenv
load_dotenv()

issues = []
warnings = []

# 1. Check Python version
print("1️⃣  Python Version Check")
print("-" * 70)
py_version = sys.version_info
if py_version.major == 3 and py_version.minor >= 9:
    print(f"✅ Python {py_version.major}.{py_version.minor}.{py_version.micro}")
else:
    issues.append(f"Python version {py_version.major}.{py_version.minor} - requires 3.9+")
    print(f"❌ Python {py_version.major}.{py_version.minor} - requires 3.9+")
print()

# 2. Check required packages
print("2️⃣  Required Packages Check")
print("-" * 70)
required_packages = {
    'numpy': 'numpy',
    'scipy': 'scipy',
    'dotenv': 'python-dotenv',
    'tqdm': 'tqdm',
}

for module_name, package_name in required_packages.items():
    try:
        module = __import__(module_name)
        print(f"✅ {package_name} {getattr(module, '__version__', '')}".rstrip())
    except ImportError:
        issues.append(f"Missing package: {package_name}")
        print(f"❌ {package_name} - NOT INSTALLED")
print()

# 3. Check environment variables
print("3️⃣  Environment Variables Check")
print("-" * 70)
threads = os.getenv('BOHMFLUX_THREADS')
if threads is None:
    warnings.append("BOHMFLUX_THREADS not set (ensembles run single-threaded)")
    print("⚠️  BOHMFLUX_THREADS: NOT SET")
elif threads.isdigit() and int(threads) > 0:
    print(f"✅ BOHMFLUX_THREADS: {threads}")
else:
    issues.append(f"BOHMFLUX_THREADS must be a positive integer, got '{threads}'")
    print(f"❌ BOHMFLUX_THREADS: '{threads}'")

level = os.getenv('BOHMFLUX_LOG_LEVEL', 'INFO')
if level.upper() in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
    print(f"✅ BOHMFLUX_LOG_LEVEL: {level}")
else:
    issues.append(f"Unknown log level: {level}")
    print(f"❌ BOHMFLUX_LOG_LEVEL: {level}")

log_file = os.getenv('BOHMFLUX_LOG_FILE')
if log_file and not os.path.isdir(os.path.dirname(os.path.abspath(log_file))):
    issues.append(f"Log file directory does not exist: {log_file}")
    print(f"❌ BOHMFLUX_LOG_FILE: {log_file}")
else:
    print(f"✅ BOHMFLUX_LOG_FILE: {log_file or '(stderr only)'}")
print()

# 4. Check service imports
print("4️⃣  Service Modules Check")
print("-" * 70)
services = [
    'services.params_service',
    'services.eigenmodes_service',
    'services.stationary_service',
    'services.wavepacket_service',
    'services.trajectory_service',
    'services.opspeed_service',
    'services.oracle_service',
    'services.validation_service',
    'services.report_service',
]

for service in services:
    try:
        __import__(service)
        print(f"✅ {service}")
    except Exception as e:
        issues.append(f"Cannot import {service}: {e}")
        print(f"❌ {service}: {e}")
print()

# 5. Check shipped configs
print("5️⃣  Config Files Check")
print("-" * 70)
config_dir = os.path.join(ROOT, 'configs')
try:
    from services.params_service import ConfigError, PerturbativeRangeError, load_config, require_perturbative
    for name in sorted(os.listdir(config_dir)):
        if not name.endswith('.json'):
            continue
        try:
            params = load_config(os.path.join(config_dir, name))
            require_perturbative(params)
            print(f"✅ {name}: J0={params.J0:.3g}, Delta/J0={params.delta_over_J0:.3g}, Gamma={params.Gamma:.3g}")
        except PerturbativeRangeError as e:
            warnings.append(f"{name}: {e}")
            print(f"⚠️  {name}: {e}")
        except ConfigError as e:
            issues.append(f"{name}: {e}")
            print(f"❌ {name}: {e}")
except Exception as e:
    issues.append(f"Cannot check configs: {e}")
    print(f"❌ Cannot check configs: {e}")
print()

# Summary
print("=" * 70)
print("SUMMARY")
print("=" * 70)

if not issues and not warnings:
    print("✅ ALL CHECKS PASSED - bohmflux is ready!")
elif not issues and warnings:
    print(f"✅ bohmflux is operational with {len(warnings)} warnings")
    print("\nWarnings:")
    for warning in warnings:
        print(f"  ⚠️  {warning}")
else:
    print(f"❌ Found {len(issues)} critical issues:")
    for issue in issues:
        print(f"  ❌ {issue}")
    if warnings:
        print(f"\nAlso {len(warnings)} warnings:")
        for warning in warnings:
            print(f"  ⚠️  {warning}")

print()
print("=" * 70)
sys.exit(0 if not issues else 1)
