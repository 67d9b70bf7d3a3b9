#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_delete_node_path1_recurse_left(void)
{
    int values[] = {10, 5};
    struct node *root = bst_from_array(values, 2);
    struct node *r = delete_node(root, 5);
    TEST_ASSERT_EQUAL_PTR(root, r);
    TEST_ASSERT_NULL(root->left);
    free_tree(root);
}
