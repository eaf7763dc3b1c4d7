"""Endpoint tests for the FastAPI app using the in-process TestClient."""
from fastapi.testclient import TestClient

from actions import ACTION_DIM
from cards import ARCHETYPES
from main import MAX_API_EPISODES, app
from observe import OBS_DIM

client = TestClient(app)


def test_health():
    resp = client.get('/health')
    assert resp.status_code == 200
    data = resp.json()
    assert data['status'] == 'ok'
    assert data['obs_dim'] == OBS_DIM == 3077
    assert data['action_dim'] == ACTION_DIM == 478


def test_catalog_and_decks():
    assert client.get('/catalog').status_code == 200
    for archetype in ARCHETYPES:
        assert client.get(f'/decks/{archetype}').status_code == 200
    resp = client.get('/decks/burn')
    assert resp.status_code == 404
    assert 'burn' in resp.json()['detail']


def test_layouts():
    actions = client.get('/layout/actions').json()
    assert actions['action_dim'] == 478
    observation = client.get('/layout/observation').json()
    assert observation['obs_dim'] == 3077


def test_scm_graph():
    graph = client.get('/scm/graph').json()
    assert len(graph['edges']) == 17
    dot = client.get('/scm/graph.dot')
    assert dot.status_code == 200
    assert dot.text.startswith('digraph')


def test_match():
    payload = {'agent_a': 'random', 'agent_b': 'heuristic', 'deck_a': 'mono_red_aggro',
               'deck_b': 'azorius_control', 'episodes': 2, 'seeds': [0], 'turn_cap': 8}
    resp = client.post('/match', json=payload)
    assert resp.status_code == 200
    data = resp.json()
    summary = data['summary']
    assert summary['episodes'] == 2 == len(data['rows'])
    assert summary['wins'] + summary['losses'] + summary['draws'] == 2
    assert client.post('/match', json=payload).json()['rows'] == data['rows']


def test_match_rejects_bad_requests():
    base = {'deck_a': 'mono_red_aggro', 'deck_b': 'azorius_control', 'episodes': 1}
    assert client.post('/match', json={**base, 'deck_b': 'burn'}).status_code == 400
    assert client.post('/match', json={**base, 'agent_a': 'missing.pkl'}).status_code == 400
    assert client.post('/match', json={**base, 'episodes': MAX_API_EPISODES + 1}).status_code == 422
    assert client.post('/match', json={**base, 'seeds': []}).status_code == 400
