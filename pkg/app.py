import logging

from flask import Flask, request, jsonify
from flask_cors import CORS

# config loads the .env file on import
import config
import harness
import stl_core
from errors import InfeasibleError, MissionError
from scenario_loader import list_scenarios, load_scenario

config.configure_logging()
logger = logging.getLogger(__name__)

# Initialize Flask app
app = Flask(__name__)

# Origins come from MISSION_CORS_ORIGINS ("*" by default).
CORS(app, origins=config.CORS_ORIGINS)


def _error_response(e):
    """Map pipeline exceptions to HTTP codes: 422 infeasible, 400 bad input, 500 otherwise."""
    if isinstance(e, InfeasibleError):
        return jsonify({"error": str(e), "stage": e.stage}), 422
    if isinstance(e, (MissionError, ValueError)):
        stage = getattr(e, "stage", "input")
        return jsonify({"error": str(e), "stage": stage}), 400
    logger.exception("[App] unexpected failure")
    return jsonify({"error": f"Unexpected failure: {str(e)}"}), 500


def _body(*required):
    data = request.get_json(silent=True) or {}
    missing = [key for key in required if key not in data]
    return data, missing


@app.route('/')
def home():
    """
    Basic route to confirm the backend is running.
    """
    return jsonify({"message": "Mission planning backend is running!"}), 200


@app.route('/scenarios')
def scenarios():
    """
    Lists the shipped scenarios with their summaries.
    """
    out = []
    for name in list_scenarios():
        try:
            out.append(load_scenario(name).summary())
        except MissionError as e:
            logger.warning("[App] scenario '%s' failed to load: %s", name, e)
            out.append({"name": name, "error": str(e)})
    return jsonify(out)


@app.route('/parse_spec', methods=['POST'])
def parse_spec():
    """
    Parses an STL specification.
    Expects JSON: {"spec": "...", "dims": ["x", "y"]}
    Returns the canonical printed form and the horizon in seconds.
    """
    data, missing = _body('spec')
    if missing:
        return jsonify({"error": "Missing 'spec' in request body"}), 400
    dims = tuple(data.get('dims', ()))
    try:
        formula = stl_core.parse_spec(data['spec'], dims)
        return jsonify({
            "formula": stl_core.print_spec(formula, dims),
            "horizon": stl_core.horizon(formula),
            "dims_used": stl_core.dims_used(formula, dims),
        })
    except Exception as e:
        return _error_response(e)


@app.route('/robustness', methods=['POST'])
def robustness():
    """
    Evaluates spatial robustness of a specification on a sampled signal.
    Expects JSON: {"spec": "...", "dims": [...], "dt": 1.0, "values": [[...], ...], "t": 0.0}
    """
    data, missing = _body('spec', 'values')
    if missing:
        return jsonify({"error": f"Missing {missing} in request body"}), 400
    dims = tuple(data.get('dims', ()))
    try:
        formula = stl_core.parse_spec(data['spec'], dims)
        values = data['values']
        dt = float(data.get('dt', 1.0))
        times = data.get('times') or [dt * k for k in range(len(values))]
        result = stl_core.evaluate(formula, stl_core.Signal(times, values, dims), float(data.get('t', 0.0)))
        return jsonify({"rho": result.rho, "satisfied": result.satisfied, "boundary": result.boundary})
    except Exception as e:
        return _error_response(e)


@app.route('/plan', methods=['POST'])
def plan():
    """
    Solves the planning MILP for a shipped scenario (or a scenario path).
    Expects JSON: {"scenario": "planar_inspection", "solver": "bnb"}
    """
    data, missing = _body('scenario')
    if missing:
        return jsonify({"error": "Missing 'scenario' in request body"}), 400
    try:
        scenario = load_scenario(data['scenario'])
        result = harness.plan_space(scenario, data.get('solver'))
        return jsonify(harness.jsonable(result.to_dict()))
    except Exception as e:
        return _error_response(e)


@app.route('/pipeline', methods=['POST'])
def pipeline():
    """
    Runs plan, transfer, both closed loops and validation; returns the report.
    Expects JSON: {"scenario": "...", "seed": 7, "injection_scale": 0.5, "feedback_equivalence": true}
    """
    data, missing = _body('scenario')
    if missing:
        return jsonify({"error": "Missing 'scenario' in request body"}), 400
    try:
        scenario = load_scenario(data['scenario'])
        injection = None
        if data.get('injection_scale') is not None:
            injection = harness.scaled_injection(scenario, float(data['injection_scale']))
        result = harness.run_pipeline(
            scenario,
            seed=data.get('seed'),
            injection=injection,
            feedback_equivalence=bool(data.get('feedback_equivalence', True)),
            outdir=data.get('outdir'),
        )
        return jsonify(result.report)
    except Exception as e:
        return _error_response(e)


if __name__ == '__main__':
    app.run(debug=True, host='0.0.0.0', port=5000)
