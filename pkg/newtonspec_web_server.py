"""
newtonspec Web Server Application

Flask-based job API for verification runs
Progress of every run phase is pushed over Socket.IO
"""

import argparse
import logging
import time

from flask import Flask, jsonify, request
from flask_socketio import SocketIO, emit

from newtonspec_constants import Defaults, ExitCodes, SurfaceNames
from newtonspec_errors import NewtonSpecError, NotConvergedError, NotEllipticError, UnsupportedError
from newtonspec_immersion import parse_surface
from newtonspec_verify import (RunConfig, check_identities, check_theorem, converge,
                               random_identity_suite, spectrum)

logger = logging.getLogger(__name__)

app = Flask(__name__)
app.config['SECRET_KEY'] = 'newtonspec_web_secret_key'
socketio = SocketIO(app, cors_allowed_origins="*", async_mode='threading')

COMMANDS = ('verify', 'converge', 'spectrum', 'identities')

SURFACE_CATALOG = [
    {"name": SurfaceNames.SPHERE, "packing": "sphere:R", "n": [2, 3], "c": [0]},
    {"name": SurfaceNames.ELLIPSOID, "packing": "ellipsoid:a1,...,a(n+1)", "n": [2, 3], "c": [0]},
    {"name": SurfaceNames.FLAT_TORUS, "packing": "flattorus:r1,r2", "n": [2], "c": [0]},
    {"name": SurfaceNames.CLIFFORD_TORUS, "packing": "cliffordtorus:r1,r2", "n": [2], "c": [1]},
    {"name": SurfaceNames.HYPERPLANE, "packing": "hyperplane", "n": [1, 2, 3, 4], "c": [0],
     "mesh": False},
]


def exit_code_for(error: Exception) -> int:
    """Map an exception to the command line exit code"""
    if isinstance(error, NotEllipticError):
        return ExitCodes.NOT_ELLIPTIC
    if isinstance(error, NotConvergedError):
        return ExitCodes.NOT_CONVERGED
    if isinstance(error, OSError):
        return ExitCodes.IO_ERROR
    return ExitCodes.INVALID_INPUT


def run_job(command, surface, dim=Defaults.SPHERE_DIM, c=None, r=0, params=None):
    """
    Execute one job synchronously

    Args:
        command: 'verify', 'converge', 'spectrum' or 'identities'
        surface: CLI surface packing
        dim: Sphere / hyperplane dimension
        c: Ambient curvature (validated against the surface)
        r: Even order of L_r
        params: RunConfig fields; 'levels' for converge, 'samples' and
            'random' for identities

    Returns:
        Report dictionary
    """
    params = dict(params or {})
    spec = parse_surface(surface, dim=int(dim), c=None if c is None else int(c))
    r = int(r)
    started = time.perf_counter()

    def progress(phase, elapsed):
        socketio.emit('run_progress', {
            'command': command,
            'surface': spec.descriptor,
            'phase': phase,
            'elapsed': elapsed,
        })

    if command == 'identities':
        samples = int(params.pop('samples', Defaults.IDENTITY_SAMPLES))
        trials = int(params.pop('random', 0))
        result = check_identities(spec, r, samples, int(params.pop('seed', Defaults.SEED))).to_dict()
        if trials:
            result['random_suite'] = random_identity_suite(trials)
        progress('identities', time.perf_counter() - started)
        return result

    levels = params.pop('levels', None)
    config = RunConfig.from_mapping(params)
    if command == 'verify':
        report = check_theorem(spec, r, config, progress=progress)
    elif command == 'converge':
        report = converge(spec, r, levels or [max(config.level - 2, 0), max(config.level - 1, 1), config.level],
                          config, progress=progress)
    elif command == 'spectrum':
        report = spectrum(spec, r, config, progress=progress)
    else:
        raise NewtonSpecError(f"Unknown command: {command}")
    return report.to_dict(config.include_timings)


@app.route('/')
def index():
    """Service description"""
    return jsonify({"service": "newtonspec", "commands": list(COMMANDS)})


@app.route('/api/surfaces', methods=['GET'])
def api_surfaces():
    """Get the surface catalog"""
    return jsonify(SURFACE_CATALOG)


@app.route('/api/run', methods=['POST'])
def api_run():
    """Run a verification job"""
    data = request.json or {}
    command = data.get('command')
    surface = data.get('surface')

    if command not in COMMANDS:
        return jsonify({"success": False, "error": f"Unknown command: {command}"}), 400
    if not surface:
        return jsonify({"success": False, "error": "Surface not specified"}), 400

    try:
        result = run_job(command, surface, data.get('dim', Defaults.SPHERE_DIM), data.get('c'),
                         data.get('r', 0), data.get('params'))
        return jsonify({"success": True, "result": result})
    except (ValueError, TypeError, UnsupportedError) as e:
        return jsonify({"success": False, "error": str(e), "exit_code": ExitCodes.INVALID_INPUT}), 400
    except NewtonSpecError as e:
        return jsonify({"success": False, "error": str(e), "exit_code": exit_code_for(e)}), 500
    except Exception as e:
        logger.exception("job %s on %s failed", command, surface)
        return jsonify({"success": False, "error": f"Unexpected error: {str(e)}"}), 500


@socketio.on('connect')
def handle_connect():
    """Handle client connection"""
    emit('connected', {'message': 'Connected to server'})


@socketio.on('disconnect')
def handle_disconnect():
    """Handle client disconnection"""
    logger.info("client %s disconnected", request.sid)


def build_parser():
    """Command line of the web server"""
    parser = argparse.ArgumentParser(description='newtonspec Web Server')
    parser.add_argument('--host', default='0.0.0.0', help='Host to bind to (default: 0.0.0.0 for external access)')
    parser.add_argument('--port', type=int, default=5002, help='Port to bind to (default: 5002)')
    parser.add_argument('--debug', action='store_true', help='Enable debug mode')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.INFO)
    print(f"Starting newtonspec Web Server on http://{args.host}:{args.port}")
    print(f"POST jobs to http://{args.host}:{args.port}/api/run, progress on the 'run_progress' event")
    socketio.run(app, host=args.host, port=args.port, debug=args.debug, allow_unsafe_werkzeug=True)


if __name__ == '__main__':
    main()
