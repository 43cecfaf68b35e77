#!/usr/bin/env python3
"""
Tests for the command-line entry point and its exit codes.
"""
import json
import os
import sys
import tempfile

from main import EXIT_CONFIG, EXIT_OK, build_parser, main

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs')


def _write_config(directory, **values):
    data = {'name': 'cli_dmss', 'n_nodes': 3, 'seeds': [0, 1], 'max_iters': 2, 'evaluation_points': 4,
            'eps_loss': 0.0, 'eps_grad': 0.0, 'output_dir': os.path.join(directory, 'out')}
    data.update(values)
    path = os.path.join(directory, 'config.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f)
    return path


def test_parser_commands():
    parser = build_parser()
    args = parser.parse_args(['run', 'a.json', '--seed-override', '3'])
    assert args.command == 'run' and args.seed_override == 3
    assert parser.parse_args(['-q', 'verify']).quiet
    try:
        parser.parse_args([])
        assert False, "a command is required"
    except SystemExit:
        pass


def test_budget_command():
    assert main(['budget', os.path.join(CONFIG_DIR, 'poisson_neumann.json')]) == EXIT_OK
    assert main(['-q', 'budget', os.path.join(CONFIG_DIR, 'dmss_ki.json')]) == EXIT_OK


def test_invalid_config_exit_code():
    with tempfile.TemporaryDirectory() as directory:
        path = _write_config(directory, eta=[1.0, -0.5, 1.0])
        assert main(['run', path]) == EXIT_CONFIG
        path = _write_config(directory, lerning_rate=0.1)
        assert main(['budget', path]) == EXIT_CONFIG
        assert main(['run', os.path.join(directory, 'missing.json')]) == EXIT_CONFIG
        path = _write_config(directory)
        assert main(['run', path, '--seed-override', '-1']) == EXIT_CONFIG


def test_run_command_writes_reports():
    with tempfile.TemporaryDirectory() as directory:
        path = _write_config(directory)
        assert main(['-q', 'run', path, '--seed-override', '5']) == EXIT_OK
        written = sorted(os.listdir(os.path.join(directory, 'out')))
        assert 'cli_dmss_seed5_trace.csv' in written
        assert 'cli_dmss_seed0_trace.csv' not in written, "the override replaces the seed list"
        assert 'runs.db' in written, "the registry sits next to the reports"


def test_output_dir_from_environment():
    with tempfile.TemporaryDirectory() as directory:
        path = _write_config(directory, seeds=[2], max_iters=1)
        target = os.path.join(directory, 'env_out')
        os.environ['LAGRANGE_VQA_OUTPUT_DIR'] = target
        try:
            assert main(['-q', 'run', path]) == EXIT_OK
        finally:
            del os.environ['LAGRANGE_VQA_OUTPUT_DIR']
        assert os.path.exists(os.path.join(target, 'cli_dmss_summary.json'))


if __name__ == "__main__":
    failures = 0
    for name, test in list(globals().items()):
        if name.startswith('test_') and callable(test):
            try:
                test()
                print(f"✓ {name}")
            except AssertionError as e:
                failures += 1
                print(f"✗ {name}: {e}")
    sys.exit(1 if failures else 0)
