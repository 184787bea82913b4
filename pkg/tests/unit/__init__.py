"""
resilient-consensus-ac - 単体テストパッケージ

テスト構造：
- test_mmdp.py: 表形式MMDP・2状態チェーン・グリッドワールド
- test_linear.py: 線形クリティック・報酬モデル・ソフトマックス方策・不動点オラクル
- test_consensus.py: 通信グラフ・射影誤差・トリミング・ロバスト性判定
- test_agents.py: 協調エージェントと各種敵対エージェント
- test_mlp.py / test_deep.py: MLPとその合意更新
- test_schedules.py / test_config.py / test_harness.py: ステップサイズ・設定・学習ループ
- test_exceptions.py / test_logging_config.py / test_utils.py: 共通基盤
"""
